"""
Epsilon-SVR trained by SMO
==========================

A linear SVR on min-max scaled inputs. The dual objective rises with every
SMO step and stops once the largest KKT violation drops below tolerance.
"""

import numpy as np

from gazeaffect import SvrHyperparams, svr

rng = np.random.default_rng(0)
x = rng.normal(size=(200, 5))
y = x @ [0.5, -0.3, 0.0, 0.2, 0.0] + 0.05 * rng.normal(size=200)

trace = []
model = svr.fit(x[:150], y[:150], SvrHyperparams(c=1.0, epsilon=0.01), trace=trace)
meta = model.train_meta
print(f"{meta.status} after {meta.iterations} steps, {model.betas.size} support vectors")
print(f"dual objective: {trace[0]:.4f} after one step, {trace[-1]:.4f} at the end")

# weights live on the normalized scale, so they are comparable across inputs
print("weights:", np.round(model.weights, 3))

pred = model.predict(x[150:])
print(f"held-out RMSE {np.sqrt(np.mean((pred - y[150:]) ** 2)):.4f}")

# a larger C fits more tightly; a tiny C barely moves away from the mean
for c in (1e-4, 1e-2, 1.0, 10.0):
    m = svr.fit(x[:150], y[:150], SvrHyperparams(c=c))
    print(f"C={c:<7g} held-out r = {np.corrcoef(m.predict(x[150:]), y[150:])[0, 1]:.3f}")

# models round-trip through a plain text format
assert svr.loads(svr.dumps(model)) == model
