"""Smoke test for the Python bindings.

Build and run from the repository root:

    cargo build --release -p imo-py --features extension-module
    cp target/release/libimo_py.so python/imo.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import imo  # noqa: E402


def argmax_abs(values):
    return max(range(len(values)), key=lambda i: abs(values[i]))


def main():
    suite = imo.synthetic_suite(count=100, seed=42)
    z = suite["double_peak"].redshift
    model = imo.ToyModel(z, suite["model_toml"])
    assert model.latent_dim == 6

    ensemble = imo.sample_baselines(suite["dataset"], 8, model, seed=42)
    assert len(set(ensemble.source_ids)) == 8

    x = suite["double_peak"]
    stack = imo.imo(model, x, ensemble)
    assert stack.windows == [1, 4, 16, 64]
    label = suite["double_peak_label"]
    peak = argmax_abs(stack.combined)
    assert any(a <= peak < b for a, b in label["affected"]), (peak, label)

    clean = imo.imo(model, suite["clean"], ensemble)
    ratio = max(map(abs, stack.combined)) / max(map(abs, clean.combined))
    assert ratio > 10, ratio

    baseline = ensemble.reconstructions[0]
    flux = x.flux
    ig = imo.integrated_gradients(model, flux, baseline, 512)
    delta = model.score(flux) - model.score(baseline)
    assert abs(sum(ig) - delta) < 1e-8 * (1 + abs(delta))
    assert imo.occlusion(model, flux, baseline, 1) == imo.feature_ablation(model, flux, baseline)
    assert len(imo.saliency(model, flux)) == len(flux)
    assert len(imo.expected_gradients(model, flux, ensemble, 64)) == len(flux)

    assert math.isclose(imo.combine_min_variance([[0.0], [5.0]], [[1.0], [4.0]])[0], 1.0)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "x.spec")
        imo.save_spectrum(path, x)
        back = imo.load_spectrum(path)
        assert back.flux == x.flux and back.redshift == x.redshift

    try:
        imo.imo(model, x, ensemble, windows=[4, 1])
    except ValueError:
        pass
    else:
        raise AssertionError("unsorted windows accepted")

    print(f"ok: argmax pixel {peak}, anomaly/null ratio {ratio:.1f}")


if __name__ == "__main__":
    main()
