import numpy as np
import pytest

from morphattack import (FlowField, Image, RoiMask, TrainingPair,
                         assemble_matrix, learn_bases, learn_dictionary,
                         load_dictionary, save_dictionary)
from morphattack.dictionary import pick_k
from morphattack.errors import (CorruptDictionary, DimensionMismatch,
                                EmptyTrainingSet, FormatError)
from morphattack.rng import CounterRng

from conftest import toy_pairs


def direct_covariance_bases(matrix, k):
    """Independent oracle: eigendecompose the full 3n x 3n covariance."""
    cov = matrix @ matrix.T
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    out = []
    for j in order[:k]:
        w = evecs[:, j]
        i = int(np.argmax(np.abs(w)))
        out.append(-w if w[i] < 0 else w)
    return np.column_stack(out), evals[order[:k]]


def random_matrix(seed, n_raster, m):
    """Assembled matrix for random pairs (already mean-subtracted)."""
    rng = CounterRng.from_seeds(seed)
    side = int(np.sqrt(n_raster))
    pairs = []
    for i in range(m):
        sub = rng.split(i)
        px = sub.uniform(n_raster, 0.1, 0.9).reshape(side, side)
        h = sub.uniform(n_raster, -1, 1).reshape(side, side)
        v = sub.uniform(n_raster, -1, 1).reshape(side, side)
        pairs.append(TrainingPair(image=Image(px), flow=FlowField(h, v)))
    matrix, means = assemble_matrix(pairs, RoiMask.full(side, side))
    return matrix, pairs, means


class TestAssemble:
    def test_identical_pairs_give_zero_matrix(self):
        rng = CounterRng.from_seeds(1)
        px = rng.uniform(16, 0.2, 0.8).reshape(4, 4)
        h = rng.uniform(16, -1, 1).reshape(4, 4)
        v = rng.uniform(16, -1, 1).reshape(4, 4)
        pair = TrainingPair(image=Image(px), flow=FlowField(h, v))
        matrix, _ = assemble_matrix([pair, pair], RoiMask.full(4, 4))
        assert np.max(np.abs(matrix)) == 0.0

    def test_rows_are_mean_free(self):
        matrix, _, _ = random_matrix(2, 16, 6)
        assert np.max(np.abs(matrix.mean(axis=1))) <= 1e-12

    def test_hand_built_two_pair_matrix(self):
        # 2x2 images and flows, full ROI: column i is the deviation from
        # the pair mean, so the two columns are +/- half the difference.
        img_a = Image(np.array([[0.2, 0.4], [0.6, 0.8]]))
        img_b = Image(np.array([[0.4, 0.4], [0.2, 0.0]]))
        zero = np.zeros((2, 2))
        pa = TrainingPair(image=img_a, flow=FlowField(zero, zero))
        pb = TrainingPair(image=img_b, flow=FlowField(zero, zero))
        matrix, (mu_x, mu_h, mu_v) = assemble_matrix([pa, pb],
                                                     RoiMask.full(2, 2))
        half_diff = (img_a.vectorize() - img_b.vectorize()) / 2.0
        assert np.allclose(matrix[:4, 0], half_diff, atol=1e-15)
        assert np.allclose(matrix[:4, 1], -half_diff, atol=1e-15)
        assert np.allclose(mu_x, (img_a.vectorize() + img_b.vectorize()) / 2)
        assert np.all(matrix[4:] == 0.0)
        assert np.all(mu_h == 0.0) and np.all(mu_v == 0.0)

    def test_roi_zeroes_outside(self):
        _, pairs, _ = random_matrix(3, 16, 4)
        roi = RoiMask(width=4, height=4, top=1, left=1, rows=2, cols=2)
        matrix, (mu_x, _, _) = assemble_matrix(pairs, roi)
        outside = ~roi.mask().astype(bool).reshape(-1)
        assert np.all(matrix[:16][outside] == 0.0)
        assert np.all(mu_x[outside] == 0.0)

    def test_too_few_pairs(self):
        _, pairs, _ = random_matrix(4, 16, 2)
        with pytest.raises(EmptyTrainingSet):
            assemble_matrix(pairs[:1], RoiMask.full(4, 4))

    def test_dimension_mismatch(self):
        _, pairs, _ = random_matrix(5, 16, 3)
        with pytest.raises(DimensionMismatch):
            assemble_matrix(pairs, RoiMask.full(5, 4))


class TestLearnBases:
    def test_single_direction_data(self):
        # two pairs differing along one joint direction: the sole basis is
        # that direction, and the residual eigenvalue is ~0
        rng = CounterRng.from_seeds(6)
        d = rng.normal(12)
        matrix = np.column_stack([d / 2.0, -d / 2.0])
        basis = learn_bases(matrix, 1)
        unit = d / np.linalg.norm(d)
        i = int(np.argmax(np.abs(unit)))
        if unit[i] < 0:
            unit = -unit
        assert np.allclose(basis.w[:, 0], unit, atol=1e-12)

    def test_gram_trick_matches_direct_covariance(self):
        # oracle equivalence on 20 seeded instances (n=4 per channel, M=5)
        for seed in range(20):
            matrix, _, _ = random_matrix(100 + seed, 4, 5)
            mine = learn_bases(matrix, 4)
            ref_w, ref_eval = direct_covariance_bases(matrix, 4)
            assert np.max(np.abs(mine.w - ref_w)) <= 1e-6
            assert np.max(np.abs(mine.eigenvalues - ref_eval)
                          / np.maximum(ref_eval, 1e-30)) <= 1e-8

    def test_eigenvalues_nonincreasing_and_nonnegative(self):
        matrix, _, _ = random_matrix(7, 16, 8)
        basis = learn_bases(matrix, 7)
        ev = basis.eigenvalues
        assert np.all(ev[:-1] >= ev[1:])
        assert np.all(ev >= -1e-10)

    def test_rank_deficiency_flagged_not_fatal(self):
        rng = CounterRng.from_seeds(8)
        d = rng.normal(12)
        # 3 pairs on a single line: only one nonzero eigenvalue
        matrix = np.column_stack([d, -d, np.zeros_like(d)])
        matrix -= matrix.mean(axis=1, keepdims=True)
        basis = learn_bases(matrix, 2)
        assert basis.rank_deficient
        assert basis.w.shape[1] == 1

    def test_k_out_of_range(self):
        matrix, _, _ = random_matrix(9, 16, 4)
        with pytest.raises(ValueError):
            learn_bases(matrix, 4)  # k must be <= M-1

    def test_sign_canonicalization(self):
        matrix, _, _ = random_matrix(10, 16, 6)
        basis = learn_bases(matrix, 5)
        for j in range(basis.w.shape[1]):
            col = basis.w[:, j]
            assert col[int(np.argmax(np.abs(col)))] > 0

    def test_unit_norm_and_orthogonal(self):
        matrix, _, _ = random_matrix(11, 16, 7)
        w = learn_bases(matrix, 6).w
        gram = w.T @ w
        assert np.max(np.abs(gram - np.eye(6))) <= 1e-8


class TestDictionary:
    def test_reconstruction_completeness(self):
        # with k = M-1, every training column lies in the basis span
        pairs = toy_pairs(12, 8, 6, 6, RoiMask.full(6, 6))
        roi = RoiMask.full(6, 6)
        matrix, _ = assemble_matrix(pairs, roi)
        w = learn_bases(matrix, 7).w
        for i in range(matrix.shape[1]):
            c = matrix[:, i]
            err = np.linalg.norm(w @ (w.T @ c) - c)
            assert err <= 1e-6 * max(1.0, np.linalg.norm(c))

    def test_pick_k_energy(self):
        ev = np.array([8.0, 1.0, 0.5, 0.5])
        assert pick_k(ev, m=5, energy=0.80) == 1
        assert pick_k(ev, m=5, energy=0.95) == 3
        assert pick_k(ev, m=5, energy=0.95, cap=2) == 2

    def test_learn_dictionary_auto_k(self, query_result):
        d = learn_dictionary(query_result.pairs, RoiMask.full(32, 32))
        assert 1 <= d.k <= min(64, len(query_result.pairs) - 1)
        assert not d.rank_deficient

    def test_validate_passes_on_learned(self, joint_dict):
        joint_dict.validate()

    def test_save_load_round_trip(self, tmp_path, joint_dict):
        p1 = tmp_path / "d.amdc"
        p2 = tmp_path / "d2.amdc"
        save_dictionary(joint_dict, p1)
        loaded = load_dictionary(p1)
        save_dictionary(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(loaded.w_x, joint_dict.w_x)
        assert np.array_equal(loaded.mu_h, joint_dict.mu_h)
        assert np.array_equal(loaded.eigenvalues, joint_dict.eigenvalues)
        assert loaded.roi == joint_dict.roi

    def test_truncated_file_rejected(self, tmp_path, joint_dict):
        p = tmp_path / "trunc.amdc"
        save_dictionary(joint_dict, p)
        p.write_bytes(p.read_bytes()[:-9])
        with pytest.raises(FormatError):
            load_dictionary(p)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.amdc"
        p.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_dictionary(p)

    def test_non_unit_column_rejected(self, tmp_path, joint_dict):
        p = tmp_path / "corrupt.amdc"
        save_dictionary(joint_dict, p)
        buf = bytearray(p.read_bytes())
        # scale the first w_x entry (header 40 bytes + 3n means)
        off = 40 + 8 * 3 * joint_dict.n
        bad = np.frombuffer(bytes(buf[off:off + 8]), dtype="<f8")[0] + 0.5
        buf[off:off + 8] = np.array([bad], dtype="<f8").tobytes()
        p.write_bytes(bytes(buf))
        with pytest.raises(CorruptDictionary):
            load_dictionary(p)
