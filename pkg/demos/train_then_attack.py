"""Train a small model on the synthetic set, then measure attack damage.

The point of the exercise: a conventionally trained network can be very
accurate on clean images and still collapse under white-box attacks, and
the iterative attack hurts at least as much as the single-step one.
A couple of minutes on one core.
"""

from gradshield import (
    AttackConfig,
    ModelConfig,
    TrainConfig,
    attack_dataset,
    build_model,
    evaluate,
    synthesize_toy,
    train,
)

train_ds = synthesize_toy(n_per_class=150, classes=7, seed=11)
test_ds = synthesize_toy(n_per_class=15, classes=7, seed=12)
print(f"train {len(train_ds)} / test {len(test_ds)} synthetic dermatoscopy-like images")

model = build_model(ModelConfig(init_seed=3))
model, history = train(model, train_ds, TrainConfig(epochs=8, shuffle_seed=5, init_seed=3))
print("epoch losses:", " ".join(f"{h:.3f}" for h in history))

clean = evaluate(model, test_ds)
print(f"\nclean accuracy      {clean.accuracy:.4f}")

fgsm_cfg = AttackConfig.fgsm_default(epsilon=0.2)
fgsm_set = attack_dataset(model, test_ds, fgsm_cfg)
fa = evaluate(model, fgsm_set)
print(f"fgsm eps=0.2        {fa.accuracy:.4f}")

pgd_cfg = AttackConfig.pgd_default(epsilon=0.3, alpha=0.2, iterations=20)
pgd_set = attack_dataset(model, test_ds, pgd_cfg)
pa = evaluate(model, pgd_set)
print(f"pgd eps=0.3 (20 it) {pa.accuracy:.4f}")

print(f"\ndrop under fgsm: {clean.accuracy - fa.accuracy:.4f} absolute")
print(f"pgd at most fgsm accuracy (usually lower): {pa.accuracy:.4f} <= {fa.accuracy:.4f}")
print("\nper-class clean accuracy:")
for k, (name, row) in enumerate(zip(test_ds.class_names, clean.confusion)):
    total = row.sum()
    print(f"  {name:6s} {row[k] / max(total, 1):.2f} of {total}")
