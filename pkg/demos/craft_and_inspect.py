"""Craft adversarial images against a small CNN and inspect the perturbations.

Walks through the two attacks at several budgets, printing the largest
per-pixel change and how the prediction moves. Runs in seconds; the model
is untrained, which is enough to see the mechanics (attacks only need
gradients, not accuracy).
"""

from gradshield import (
    AttackConfig,
    ModelConfig,
    build_model,
    fgsm,
    linf_distance,
    pgd,
    synthesize_toy,
)

model = build_model(ModelConfig(conv_widths=(4, 4, 4, 4, 8), init_seed=7))
data = synthesize_toy(n_per_class=10, classes=7, seed=21)
x, y = data.images, data.labels
print(f"{len(data)} toy images, classes {data.class_names[:3]}... labels 0..6")

print("\nfgsm: one gradient-sign step of size epsilon")
for eps in (0.0, 0.05, 0.1, 0.3):
    adv = fgsm(model, x, y, AttackConfig.fgsm_default(epsilon=eps))
    _, pred = model.predict(adv.data)
    print(
        f"  eps={eps:4.2f}  linf={linf_distance(adv.data, x):.4f}"
        f"  range=[{adv.data.min():.3f},{adv.data.max():.3f}]"
        f"  still-correct={int((pred == y).sum())}/{len(y)}"
    )

print("\npgd: repeated steps, re-projected into the epsilon ball each time")
cfg = AttackConfig.pgd_default(epsilon=0.1, alpha=0.05, iterations=8)
one = x[:1]
_, trace = pgd(model, one, y[:1], cfg, return_iterates=True)
for i, it in enumerate(trace, start=1):
    print(f"  step {i}: linf from origin {linf_distance(it, one):.4f}")

adv = pgd(model, x, y, cfg)
_, pred = model.predict(adv.data)
print(f"\npgd eps=0.1 over all images: still-correct={int((pred == y).sum())}/{len(y)}")
print("every iterate stayed inside the ball and inside [0,1] by construction")
