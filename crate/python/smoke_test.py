"""Smoke test for the chaosib_py extension module.

Build it first, e.g. `maturin develop -m crates/python/Cargo.toml`, or copy
target/<profile>/libchaosib_py.so next to this file as chaosib_py.so.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import chaosib_py as cb


def main():
    cfg = cb.PendulumConfig(t_total=60.0)
    assert cfg.saved_states == 500
    assert abs(cfg.energy((0.0, 0.0, 0.0, 0.0))) < 1e-12

    data = cb.simulate(cfg, 5, 7)
    assert len(data) == 5 and data.n_steps == 500
    assert data.max_relative_drift <= 1e-3
    first = data.trajectory(0)[0]
    assert abs(cfg.energy(first) - 3.0 * 9.81) < 1e-2

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "d.dpib")
        data.save(path)
        again = cb.Dataset.load(path)
        assert again.trajectory(3) == data.trajectory(3)

        log = cb.train(data, mode="dib", steps=40, batch_size=16, eval_every=20, out_dir=os.path.join(tmp, "run"))
        assert [p["step"] for p in log] == [20, 40]
        for p in log:
            assert 0.0 <= p["mi_estimate"] <= math.log(16)
            assert abs(sum(p["kl_per_variable"]) - p["kl_total"]) < 1e-9
        assert cb.read_runlog(os.path.join(tmp, "run", "runlog.csv")) == log
        shares = cb.allocation_profile(os.path.join(tmp, "run", "runlog.csv"))
        assert all(abs(sum(s) - 1.0) < 1e-9 for _, s in shares)

        model = cb.Model.load(os.path.join(tmp, "run", "checkpoint.json"))
        assert model.mode == "dib" and model.step == 40
        sample = data.sample_states(50, 1)
        mean, log_var = model.posteriors(sample[:1])[0]
        assert len(mean) == 4 * 32
        clusters = model.co_embedded_states(cfg, sample, sample[0])
        assert clusters["members"][0] == sample[0] and clusters["bc"][0] == 1.0

    bc = cb.bhattacharyya_coefficient(([0.0], [0.0]), ([1.0], [0.0]))
    assert abs(bc - math.exp(-1.0 / 8.0)) < 1e-12
    assert abs(cb.kl_to_standard_normal([1.0], [0.0]) - 0.5) < 1e-15
    loss, mi = cb.infonce_loss([[0.0, 0.0], [5.0, 5.0]], [[0.0, 0.0], [5.0, 5.0]])
    assert mi > 0.0 and loss >= 0.0
    assert abs(cb.beta_at(50_000) - 2.0) < 1e-12

    try:
        cb.PendulumConfig(l1=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative arm length accepted")

    print("chaosib_py smoke test passed")


if __name__ == "__main__":
    main()
