import numpy as np
import pytest

from sdfscat import scattering, sdfgeom
from sdfscat.errors import DomainError, FormatError, GeometryError
from sdfscat.scattering import (
    IncidentWave,
    MeasurementSet,
    add_noise,
    load_measurements,
    make_sensors,
    plane_wave,
    plane_wave_dn,
    save_measurements,
    synthesize,
    uniform_directions,
)
from sdfscat.sdfgeom import Rect, circle_sdf


class TestPlaneWave:
    def test_value_at_origin(self):
        w = IncidentWave(3.0, (1.0, 0.0))
        assert plane_wave(w, (0.0, 0.0)) == 1.0 + 0.0j

    def test_quarter_period(self):
        w = IncidentWave(2.0, (1.0, 0.0))
        v = plane_wave(w, (np.pi / 4.0, 0.0))
        assert v == pytest.approx(1j, abs=1e-14)

    def test_unit_modulus_everywhere(self):
        w = IncidentWave(4.5, (0.6, 0.8))
        rng = np.random.default_rng(0)
        for x in rng.uniform(-5, 5, (20, 2)):
            assert abs(plane_wave(w, x)) == pytest.approx(1.0, abs=1e-14)

    def test_direction_must_be_unit(self):
        with pytest.raises(DomainError):
            IncidentWave(1.0, (1.0, 1.0))

    def test_bad_kappa(self):
        with pytest.raises(DomainError):
            IncidentWave(0.0, (1.0, 0.0))


class TestPlaneWaveDn:
    def test_orthogonal_normal_vanishes(self):
        w = IncidentWave(2.0, (1.0, 0.0))
        assert plane_wave_dn(w, (0.3, -0.7), (0.0, 1.0)) == 0.0

    def test_aligned_normal_at_origin(self):
        w = IncidentWave(2.0, (1.0, 0.0))
        assert plane_wave_dn(w, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(2j)

    def test_matches_directional_difference(self):
        w = IncidentWave(3.0, (0.8, -0.6))
        x = np.array([0.4, 0.9])
        n = np.array([np.cos(0.3), np.sin(0.3)])
        h = 1e-8
        fd = (plane_wave(w, x + h * n) - plane_wave(w, x - h * n)) / (2 * h)
        assert plane_wave_dn(w, x, n) == pytest.approx(fd, rel=1e-6)

    def test_normal_must_be_unit(self):
        w = IncidentWave(1.0, (1.0, 0.0))
        with pytest.raises(DomainError):
            plane_wave_dn(w, (0.0, 0.0), (1.0, 1.0))


class TestUniformDirections:
    def test_five_directions(self):
        dirs = np.array(uniform_directions(5))
        angles = np.degrees(np.arctan2(dirs[:, 1], dirs[:, 0])) % 360.0
        assert np.allclose(angles, [0.0, 72.0, 144.0, 216.0, 288.0], atol=1e-12)


class TestMakeSensors:
    def test_full_ring_spacing(self):
        arr = make_sensors("full", 96, 4.5)
        assert arr.positions.shape == (96, 2)
        assert np.allclose(np.hypot(arr.positions[:, 0], arr.positions[:, 1]),
                           4.5)
        angles = np.degrees(np.arctan2(arr.positions[:, 1],
                                       arr.positions[:, 0])) % 360.0
        gaps = np.diff(np.sort(angles))
        assert np.allclose(gaps, 3.75, atol=1e-9)

    def test_full_four_on_axes(self):
        arr = make_sensors("full", 4, 1.0)
        expect = np.array([(1, 0), (0, 1), (-1, 0), (0, -1)], dtype=float)
        assert np.allclose(arr.positions, expect, atol=1e-15)

    def test_arcs_split(self):
        arr = make_sensors("arcs", 96, 4.5, arcs=[(30, 150), (210, 330)])
        angles = np.degrees(np.arctan2(arr.positions[:, 1],
                                       arr.positions[:, 0])) % 360.0
        first = np.sum((angles >= 30 - 1e-9) & (angles <= 150 + 1e-9))
        second = np.sum((angles >= 210 - 1e-9) & (angles <= 330 + 1e-9))
        assert first == 48 and second == 48

    def test_overlapping_arcs_rejected(self):
        with pytest.raises(GeometryError):
            make_sensors("arcs", 10, 1.0, arcs=[(0, 90), (45, 180)])

    def test_empty_arc_rejected(self):
        with pytest.raises(GeometryError):
            make_sensors("arcs", 10, 1.0, arcs=[(90, 90)])

    def test_bad_mode(self):
        with pytest.raises(GeometryError):
            make_sensors("ring", 8, 1.0)

    def test_bad_radius(self):
        with pytest.raises(GeometryError):
            make_sensors("full", 8, 0.0)


ROI = Rect(-1.1, 1.1, -1.1, 1.1)


def _tiny_measurements():
    gt = circle_sdf((0.0, 0.0), 0.5, ROI, 48, 48)
    sensors = make_sensors("full", 8, 4.0)
    h = 2.2 / 48
    return synthesize(gt, [1.5, 2.0], 3, sensors, np.inf, 0, ROI, h, 2 * h)


class TestSynthesize:
    def test_record_layout(self):
        m = _tiny_measurements()
        assert len(m) == 2 * 3 * 8
        assert np.array_equal(m.unique_kappas(), [1.5, 2.0])
        assert m.snr_db == np.inf
        # directions at 120-degree spacing
        d = np.unique(m.directions.round(12), axis=0)
        assert len(d) == 3

    def test_deterministic(self):
        a = _tiny_measurements()
        b = _tiny_measurements()
        assert np.array_equal(a.values, b.values)

    def test_at_kappa_selection(self):
        m = _tiny_measurements()
        sub = m.at_kappa(1.5)
        assert len(sub) == 24
        assert np.all(sub.kappas == 1.5)
        with pytest.raises(DomainError):
            m.at_kappa(9.0)

    def test_nontrivial_field(self):
        m = _tiny_measurements()
        assert np.max(np.abs(m.values)) > 1e-3


class TestAddNoise:
    def test_very_high_snr_negligible(self):
        m = _tiny_measurements()
        noisy = add_noise(m, 300.0, 1)
        rel = np.linalg.norm(noisy.values - m.values) / np.linalg.norm(m.values)
        assert rel <= 1e-12

    def test_snr_calibration_monte_carlo(self):
        rng = np.random.default_rng(5)
        n = 100_000
        values = rng.normal(size=n) + 1j * rng.normal(size=n)
        m = MeasurementSet(
            kappas=np.full(n, 2.0), dir_idx=np.zeros(n, dtype=int),
            directions=np.tile([1.0, 0.0], (n, 1)),
            sensors=np.tile([4.5, 0.0], (n, 1)), values=values,
        )
        noisy = add_noise(m, 20.0, 3)
        noise = noisy.values - values
        snr = 10 * np.log10(np.mean(np.abs(values) ** 2)
                            / np.mean(np.abs(noise) ** 2))
        assert snr == pytest.approx(20.0, abs=0.2)

    def test_different_seeds_differ(self):
        m = _tiny_measurements()
        a = add_noise(m, 20.0, 1)
        b = add_noise(m, 20.0, 2)
        assert not np.array_equal(a.values, b.values)

    def test_same_seed_repeats(self):
        m = _tiny_measurements()
        a = add_noise(m, 20.0, 9)
        b = add_noise(m, 20.0, 9)
        assert np.array_equal(a.values, b.values)

    def test_infinite_snr_rejected(self):
        m = _tiny_measurements()
        with pytest.raises(DomainError):
            add_noise(m, np.inf, 0)


class TestMeasurementIO:
    def test_round_trip_bit_exact(self, tmp_path):
        m = add_noise(_tiny_measurements(), 20.0, 4)
        path = tmp_path / "m.txt"
        save_measurements(m, path)
        back = load_measurements(path)
        assert np.array_equal(back.values, m.values)
        assert np.array_equal(back.kappas, m.kappas)
        assert np.array_equal(back.sensors, m.sensors)
        assert np.array_equal(back.directions, m.directions)
        assert np.array_equal(back.dir_idx, m.dir_idx)
        assert back.snr_db == 20.0 and back.seed == 4

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("nope v1 inf 0\n")
        with pytest.raises(FormatError) as exc:
            load_measurements(path)
        assert exc.value.line == 1

    def test_bad_field_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("meas v1 inf 0\n1.0 0 1.0 0.0 4.5 0.0 0.1\n")
        with pytest.raises(FormatError) as exc:
            load_measurements(path)
        assert exc.value.line == 2

    def test_no_records(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("meas v1 inf 0\n")
        with pytest.raises(FormatError):
            load_measurements(path)


class TestFieldProperties:
    def test_incident_satisfies_discrete_helmholtz(self):
        """5-point Laplacian of the plane wave plus kappa^2 u is O(h^2)."""
        w = IncidentWave(2.5, (0.6, 0.8))
        h = 1e-3
        x, y = 0.37, -0.81

        def u(a, b):
            return plane_wave(w, (a, b))

        lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h)
               - 4 * u(x, y)) / h**2
        residual = lap + w.kappa**2 * u(x, y)
        assert abs(residual) <= 10 * h**2 * w.kappa**4

    def test_synthesis_avoids_inverse_crime(self):
        """Halving the synthesis grid changes the data at the discretization
        level but not qualitatively: the forward model used for data is not
        bit-identical to coarser re-runs."""
        gt = circle_sdf((0.0, 0.0), 0.5, ROI, 64, 64)
        sensors = make_sensors("full", 8, 4.0)
        a = synthesize(gt, [2.0], 2, sensors, np.inf, 0, ROI, 2.2 / 48,
                       2 * 2.2 / 48)
        b = synthesize(gt, [2.0], 2, sensors, np.inf, 0, ROI, 2.2 / 64,
                       2 * 2.2 / 64)
        assert not np.array_equal(a.values, b.values)
        rel = np.linalg.norm(a.values - b.values) / np.linalg.norm(b.values)
        assert rel <= 0.05
