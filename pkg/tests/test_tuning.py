import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hairadapt.config import AdaptationConfig
from hairadapt.hair import Hairstyle
from hairadapt.tuning import compute_weights, tuned_retarget


def straight_hair(n_strands=3, n_particles=5, spacing=1.0):
    pos = []
    for s in range(n_strands):
        for j in range(n_particles):
            pos.append([s * 1.0, j * spacing, 0.0])
    return Hairstyle(np.asarray(pos), np.arange(n_strands + 1) * n_particles)


class TestComputeWeights:
    def test_root_weight_zero_when_moved(self):
        hair = straight_hair()
        w = compute_weights(hair, np.full(3, 0.5), 0.2)
        assert np.all(w.gamma[hair.root_indices] == 0.0)

    def test_known_value_at_unit_ratio(self):
        # s/r = 1 with sigma 0.2: gamma = 1 - exp(-0.2) ~ 0.18127
        hair = straight_hair(n_strands=1, n_particles=3, spacing=1.0)
        w = compute_weights(hair, np.array([1.0]), 0.2)
        assert abs(w.gamma[1] - (1.0 - np.exp(-0.2))) < 1e-9
        assert abs(w.gamma[1] - 0.18127) < 1e-4

    def test_unmoved_strand_keeps_full_weight(self):
        hair = straight_hair()
        w = compute_weights(hair, np.zeros(3), 0.2)
        assert np.all(w.gamma == 1.0)

    def test_monotone_along_strand(self):
        hair = straight_hair(n_strands=1, n_particles=8)
        w = compute_weights(hair, np.array([2.0]), 0.2)
        g = w.gamma[:8]
        assert np.all(np.diff(g) >= 0)
        assert g[0] == 0.0
        assert np.all((g >= 0) & (g <= 1))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=1e-3, max_value=1e3))
    def test_scale_consistency(self, factor):
        # gamma depends on s/r only: scaling geometry and travel together
        # leaves the weights unchanged
        hair = straight_hair()
        scaled = Hairstyle(hair.positions * factor, hair.offsets.copy())
        w1 = compute_weights(hair, np.full(3, 0.7), 0.2)
        w2 = compute_weights(scaled, np.full(3, 0.7 * factor), 0.2)
        np.testing.assert_allclose(w1.gamma, w2.gamma, rtol=1e-9)

    def test_travel_count_mismatch(self):
        hair = straight_hair()
        with pytest.raises(ValueError):
            compute_weights(hair, np.zeros(2), 0.2)

    def test_csv_dump(self, tmp_path):
        hair = straight_hair()
        w = compute_weights(hair, np.array([0.0, 0.5, 1.0]), 0.2)
        path = tmp_path / "w.csv"
        w.dump_csv(path, hair)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "strand,particle,s,r,gamma"
        assert len(lines) == hair.n_particles + 1


@pytest.fixture(scope="module")
def scene(small_pair):
    from hairadapt.multiscale import multiscale_retarget
    from hairadapt.positioning import initial_transfer
    from hairadapt.synthetic import grow_hairstyle

    src, tgt = small_pair
    hair = grow_hairstyle(src, n_strands=50, n_particles=6, seed=13)
    config = AdaptationConfig(n_guides=10)
    transfer, _ = initial_transfer(hair, src, tgt, config)
    prior, _ = multiscale_retarget(hair, transfer.p_hat, tgt, config)
    return src, tgt, hair, config, transfer, prior


class TestTunedRetarget:
    def test_identity_travel_matches_unedited(self, scene):
        src, tgt, hair, config, transfer, prior = scene
        weights = compute_weights(hair, np.zeros(hair.n_strands), config.sigma_gamma)
        out, _ = tuned_retarget(
            hair, transfer.p_hat, prior, tgt, config,
            transfer.p_hat[hair.root_indices], weights,
        )
        tol = config.tol_outer_rel * hair.bounding_box_diagonal()
        assert np.linalg.norm(out - prior, axis=1).max() <= 2 * tol

    def test_moved_roots_met_exactly(self, scene):
        src, tgt, hair, config, transfer, prior = scene
        roots = hair.root_indices
        shift = np.zeros((hair.n_strands, 3))
        shift[:, 0] = 0.002
        new_roots = transfer.p_hat[roots] + shift
        # project moved roots back onto the target so they remain valid
        _, _, cp, _ = tgt.queries.closest_points(new_roots)
        travel = np.linalg.norm(cp - transfer.p_hat[roots], axis=1)
        weights = compute_weights(hair, travel, config.sigma_gamma)
        out, _ = tuned_retarget(hair, transfer.p_hat, prior, tgt, config, cp, weights)
        np.testing.assert_allclose(out[roots], cp, atol=1e-9)

    def test_tuned_penetration_free(self, scene):
        src, tgt, hair, config, transfer, prior = scene
        roots = hair.root_indices
        _, _, cp, _ = tgt.queries.closest_points(transfer.p_hat[roots] + 0.003)
        travel = np.linalg.norm(cp - transfer.p_hat[roots], axis=1)
        weights = compute_weights(hair, travel, config.sigma_gamma)
        out, _ = tuned_retarget(hair, transfer.p_hat, prior, tgt, config, cp, weights)
        offs = tgt.queries.signed_offsets(out[~hair.root_mask])
        assert offs.min() >= config.eps_c - 1e-6

    def test_near_root_particles_follow_more(self, scene):
        """Weights decaying toward the tip mean near-root particles track the
        moved root while far particles keep their unedited positions."""
        src, tgt, hair, config, transfer, prior = scene
        roots = hair.root_indices
        shift = np.zeros((hair.n_strands, 3))
        shift[:, 2] = 0.004
        _, _, cp, _ = tgt.queries.closest_points(transfer.p_hat[roots] + shift)
        travel = np.linalg.norm(cp - transfer.p_hat[roots], axis=1)
        weights = compute_weights(hair, travel, config.sigma_gamma)
        out, _ = tuned_retarget(hair, transfer.p_hat, prior, tgt, config, cp, weights)
        move = np.linalg.norm(out - prior, axis=1)
        strand_of = hair.strand_of_particle()
        near = []
        far = []
        for s in range(hair.n_strands):
            sl = hair.strand_slice(s)
            near.append(move[sl.start + 1])
            far.append(move[sl.stop - 1])
        assert np.mean(near) > np.mean(far)
