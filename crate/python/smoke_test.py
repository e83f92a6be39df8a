"""Smoke test for the Python extension: train on synthetic data and analyse the run."""

import math
import os
import tempfile

import stragglers


def main():
    ds = stragglers.Dataset.synthetic(400, dim=32, spread=0.4, seed=1)
    assert len(ds) == 400 and ds.input_dim == 32
    assert set(ds.labels) <= {-1, 1}

    model, traj = stragglers.train(ds, [12], activation="tanh", learning_rate=0.3, epochs=60, seed=0)
    assert len(traj) == 61 and traj.epochs[0] == 0
    assert traj.eps_tr[-1] <= traj.eps_tr[0]
    assert all(r is None or 0.0 <= r <= math.sqrt(2) + 1e-12 for r in traj.r_plus)
    assert abs(model.error_rate(ds) - traj.eps_tr[-1]) < 1e-12

    inv = traj.inversion()
    assert 0.0 <= inv["phi"] <= 1.0
    assert inv["stragglers"] == traj.misclassified(inv["straggler_epoch"])

    # Same seed, same trajectory.
    _, again = stragglers.train(ds, [12], activation="tanh", learning_rate=0.3, epochs=60, seed=0)
    assert again.eps_tr == traj.eps_tr and again.d == traj.d

    pruned = ds.prune(inv["stragglers"])
    assert len(pruned) == len(ds) - len(inv["stragglers"])

    r_plus, r_minus, d = stragglers.metrics_from_hidden([[1, 0], [1, 0], [-1, 0], [-1, 0]], [1, 1, -1, -1])
    assert r_plus == 0.0 and r_minus == 0.0 and abs(d - 2.0) < 1e-12

    fit = stragglers.fit_phi([(p, 0.1 * (1 - (p / 1000.0) ** -0.7), None) for p in (2000, 4000, 8000, 16000)])
    assert abs(fit["phi_inf"] - 0.1) < 1e-4

    st = stragglers.overlap_stats([([1, 2, 3], [1, 2, 3]), ([4, 5], [4, 5, 6])], population=100, null_draws=500)
    assert st["mean_m"] == 2.5

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        model.save(path)
        assert stragglers.Model.load(path).sizes == model.sizes == [32, 12, 2]
        traj.write_csv(os.path.join(tmp, "trajectory.csv"))

    try:
        stragglers.Model([4, 3, 2], activation="swish")
    except ValueError as e:
        assert "swish" in str(e)
    else:
        raise AssertionError("invalid activation accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
