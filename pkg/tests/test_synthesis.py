import numpy as np
import pytest

from rirkit.geometry import ShoeboxScene, distance
from rirkit.metrics import BROADBAND, _direct_window, describe, estimate_drr
from rirkit.synthesis import (EnrollmentEntry, IsmConfig, SynthesisError,
                              augment_from_enrollment, image_source_rir,
                              image_sources, polack_rir, split_direct)

FS = 32000
C = 343.0


def first_order_images(src, dims):
    """The six single-wall mirror images, written out by hand."""
    x, y, z = src
    lx, ly, lz = dims
    return [(-x, y, z), (2 * lx - x, y, z), (x, -y, z), (x, 2 * ly - y, z),
            (x, y, -z), (x, y, 2 * lz - z)]


def local_peaks(x, threshold):
    a = np.abs(x)
    return [i for i in range(1, len(a) - 1) if a[i] >= threshold and a[i] >= a[i - 1] and a[i] > a[i + 1]]


class TestImageSources:
    def test_free_field_single_arrival(self):
        scene = ShoeboxScene((5, 4, 3), (1.0,) * 6)
        r = 100 * C / FS  # integer-sample delay
        src, rcv = (1.0, 2.0, 1.5), (1.0 + r, 2.0, 1.5)
        h = image_source_rir(scene, src, rcv, IsmConfig(max_order=3))
        assert int(np.argmax(np.abs(h.samples))) == 100
        assert h.samples[100] == pytest.approx(1.0 / r, rel=1e-12)
        assert np.count_nonzero(np.abs(h.samples) > 1e-9) == 1

    def test_rigid_first_order_seven_images(self):
        scene = ShoeboxScene((5, 4, 3), (0.0,) * 6)
        src = (1.1, 1.3, 0.9)
        pos, gains = image_sources(scene, src, 1)
        assert len(pos) == 7
        expected = sorted([src] + first_order_images(src, scene.dims_m))
        np.testing.assert_allclose(sorted(map(tuple, pos)), expected, atol=1e-12)
        np.testing.assert_array_equal(gains, np.ones(7))

    def test_rigid_first_order_seven_arrivals(self):
        scene = ShoeboxScene((5, 4, 3), (0.0,) * 6)
        src, rcv = (1.1, 1.3, 0.9), (3.6, 2.2, 1.7)
        imgs = [src] + first_order_images(src, scene.dims_m)
        delays = sorted(distance(p, rcv) / C * FS for p in imgs)
        assert np.min(np.diff(delays)) > 4  # arrivals resolvable on the sample grid
        h = image_source_rir(scene, src, rcv, IsmConfig(max_order=1))
        threshold = 0.5 * min(1 / distance(p, rcv) for p in imgs)
        peaks = local_peaks(h.samples, threshold)
        assert len(peaks) == 7
        for p, d in zip(peaks, delays):
            assert abs(p - d) <= 1

    def test_image_count_grows_with_order(self):
        scene = ShoeboxScene((5, 4, 3), (0.0,) * 6)
        # reflections per axis k >= 1 come in two flavours, so count = sum over compositions
        def oracle(order):
            total = 0
            for a in range(order + 1):
                for b in range(order + 1 - a):
                    for c in range(order + 1 - a - b):
                        total += (2 if a else 1) * (2 if b else 1) * (2 if c else 1)
            return total
        for order in (0, 1, 2, 5):
            assert len(image_sources(scene, (1, 1, 1), order)[0]) == oracle(order)

    def test_direct_arrival_time(self, rng):
        for _ in range(20):
            dims = rng.uniform(1.75, 6.3, 3)
            scene = ShoeboxScene(dims, rng.uniform(0.6, 1.0, 6))
            src, rcv = rng.uniform(0.1, 0.9, 3) * dims, rng.uniform(0.1, 0.9, 3) * dims
            h = image_source_rir(scene, src, rcv, IsmConfig(max_order=2))
            expected = distance(src, rcv) / C * FS
            assert abs(int(np.argmax(np.abs(h.samples))) - expected) <= 1

    def test_inverse_distance_law(self, rng):
        scene = ShoeboxScene((6.3, 6.3, 3), (1.0,) * 6)
        for _ in range(10):
            r = rng.uniform(0.5, 2.5)
            src = np.array([0.5, 3.0, 1.5])
            near = image_source_rir(scene, src, src + [r, 0, 0], IsmConfig(max_order=0))
            far = image_source_rir(scene, src, src + [2 * r, 0, 0], IsmConfig(max_order=0))
            # kernel energy is nearly independent of the fractional delay
            ratio = np.sqrt(near.energy() / far.energy())
            assert ratio == pytest.approx(2.0, rel=0.02)

    def test_absorption_reduces_energy(self, rng):
        for _ in range(15):
            dims = rng.uniform(2.0, 6.0, 3)
            alpha = rng.uniform(0, 0.9, 6)
            src, rcv = rng.uniform(0.2, 0.8, 3) * dims, rng.uniform(0.2, 0.8, 3) * dims
            base = image_source_rir(ShoeboxScene(dims, alpha), src, rcv, IsmConfig(max_order=3))
            more = alpha.copy()
            more[rng.integers(6)] += 0.1
            damped = image_source_rir(ShoeboxScene(dims, more), src, rcv, IsmConfig(max_order=3))
            assert damped.energy() <= base.energy()

    def test_sabine_cross_check(self):
        scene = ShoeboxScene((5, 4, 3), (0.3,) * 6)
        h = image_source_rir(scene, (1.2, 1.5, 1.1), (3.7, 2.6, 1.6), IsmConfig(max_order=30))
        assert scene.sabine_t60() == pytest.approx(0.343, abs=1e-3)
        assert describe(h).t20_s[BROADBAND] == pytest.approx(scene.sabine_t60(), rel=0.30)

    def test_errors(self):
        scene = ShoeboxScene((3, 3, 3))
        with pytest.raises(SynthesisError, match="zero distance"):
            image_source_rir(scene, (1, 1, 1), (1, 1, 1))
        with pytest.raises(SynthesisError, match="outside"):
            image_source_rir(scene, (1, 1, 1), (4, 1, 1))
        with pytest.raises(SynthesisError):
            IsmConfig(max_order=51)
        with pytest.raises(SynthesisError):
            IsmConfig(sample_rate_hz=4000)

    def test_deterministic(self):
        scene = ShoeboxScene((4, 3, 2.5), (0.2,) * 6)
        a = image_source_rir(scene, (1, 1, 1), (3, 2, 1.2))
        b = image_source_rir(scene, (1, 1, 1), (3, 2, 1.2))
        assert a.samples.tobytes() == b.samples.tobytes()


class TestPolack:
    def test_t20(self):
        h = polack_rir(0.5, 0.0, config=IsmConfig(rng_seed=42))
        assert describe(h).t20_s[BROADBAND] == pytest.approx(0.5, rel=0.05)

    def test_drr(self):
        h = polack_rir(0.5, 0.0, config=IsmConfig(rng_seed=42))
        assert estimate_drr(h) == pytest.approx(0.0, abs=0.5)

    def test_same_seed_identical(self):
        a = polack_rir(0.7, 4.0, config=IsmConfig(rng_seed=9))
        b = polack_rir(0.7, 4.0, config=IsmConfig(rng_seed=9))
        assert a.samples.tobytes() == b.samples.tobytes()
        assert polack_rir(0.7, 4.0, config=IsmConfig(rng_seed=10)).samples.tobytes() != a.samples.tobytes()

    def test_bad_t60(self):
        with pytest.raises(SynthesisError):
            polack_rir(0.0)


class TestAugment:
    @pytest.fixture
    def room(self):
        scene = ShoeboxScene((5, 4, 3), (0.3,) * 6)
        src = (2.5, 2.0, 1.5)
        cfg = IsmConfig(max_order=8)
        rcvs = [(3.5, 2.0, 1.5), (2.5, 3.2, 1.2), (1.2, 1.4, 1.0)]
        entries = [EnrollmentEntry(image_source_rir(scene, src, r, cfg), src, r) for r in rcvs]
        return scene, src, entries

    def test_fixed_point(self, room):
        _, src, entries = room
        out = augment_from_enrollment(entries, entries[1].source, entries[1].receiver)
        assert out.samples.tobytes() == entries[1].rir.samples.tobytes()

    def test_retime_and_rescale(self):
        # 1 m enrollment, 2 m target: peak moves to 2/c and halves, tail untouched
        fs = FS
        x = np.zeros(4000)
        d1 = int(round(1.0 / C * fs))
        x[d1] = 1.0
        rng = np.random.default_rng(0)
        x[d1 + 200:d1 + 2200] = 0.05 * rng.standard_normal(2000)
        rir = x.copy()
        from rirkit.signal import SampledSignal
        entry = EnrollmentEntry(SampledSignal(rir, fs), (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
        out = augment_from_enrollment([entry], (0.0, 0.0, 0.0), (2.0, 0.0, 0.0))
        peak = int(np.argmax(np.abs(out.samples)))
        assert abs(peak - 2.0 / C * fs) <= 1
        assert out.samples[peak] == pytest.approx(0.5, rel=1e-12)
        start, stop = _direct_window(len(out), peak, fs)
        outside = np.ones(len(out), dtype=bool)
        outside[start:stop] = False
        _, _, tail = split_direct(entry.rir)
        np.testing.assert_array_equal(out.samples[outside], np.pad(tail, (0, len(out) - len(tail)))[outside])

    def test_tail_bit_equal(self, room):
        _, src, entries = room
        target = (4.4, 3.5, 1.0)
        out = augment_from_enrollment(entries, src, target)
        chosen = min(entries, key=lambda e: abs(e.distance_m - distance(src, target)))
        direct, start, tail = split_direct(chosen.rir)
        shift = int(round((distance(src, target) - chosen.distance_m) / C * FS))
        start, stop = start + shift, start + shift + len(direct)
        tail = np.pad(tail, (0, len(out) - len(tail)))
        mask = np.ones(len(out), dtype=bool)
        mask[start:stop] = False
        assert out.samples[mask].tobytes() == tail[mask].tobytes()

    def test_nearest_by_distance_difference(self, room):
        _, src, entries = room
        # a target 1.0 m away picks the 1.0 m enrollment entry unchanged
        out = augment_from_enrollment(entries, src, (2.5, 1.0, 1.5))
        assert out.samples.tobytes() == entries[0].rir.samples.tobytes()

    def test_empty(self):
        with pytest.raises(SynthesisError, match="empty"):
            augment_from_enrollment([], (0, 0, 0), (1, 0, 0))
