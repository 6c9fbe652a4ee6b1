"""Reference AdamW trace for tests/optimizer.rs, produced by torch.optim.AdamW.

Quadratic f(x, y) = 0.5·(3x² + 0.5y²) + 0.2xy from (1, -2); lr 0.1,
weight decay 0.01, default betas and eps, ten steps in float64.
"""
import torch

p = torch.tensor([1.0, -2.0], dtype=torch.float64, requires_grad=True)
opt = torch.optim.AdamW([p], lr=0.1, weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8)
rows = []
for _ in range(10):
    opt.zero_grad()
    x, y = p[0], p[1]
    f = 0.5 * (3.0 * x * x + 0.5 * y * y) + 0.2 * x * y
    f.backward()
    opt.step()
    rows.append(p.detach().tolist())
print("const TRACE: [[f64; 2]; 10] = [")
for r in rows:
    print(f"    [{r[0]!r}, {r[1]!r}],")
print("];")
