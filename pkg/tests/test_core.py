import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branched_svgd.core import (
    Color,
    EmptyCloudError,
    Particle,
    ParticleCloud,
    SeededRng,
    as_position,
    clone_with_color,
    empirical_mean,
    read_snapshot,
    write_snapshot,
)

E, O, S = Color.EXPLORER, Color.OPTIMIZER, Color.SPINE


class TestPosition:
    @pytest.mark.parametrize("bad", [[np.nan, 0.0], [0.0, np.inf], [-np.inf]])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ValueError):
            as_position(bad)
        with pytest.raises(ValueError):
            Particle(np.array(bad), E)
        with pytest.raises(ValueError):
            ParticleCloud([bad])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            as_position([])

    def test_read_only(self):
        p = as_position([1.0, 2.0])
        with pytest.raises(ValueError):
            p[0] = 3.0


class TestColor:
    def test_three_variants(self):
        assert [c.value for c in Color] == ["E", "O", "S"]

    def test_from_char(self):
        assert Color.from_char("S") is S
        with pytest.raises(ValueError):
            Color.from_char("X")


class TestParticleCloud:
    def test_default_colors_are_explorers(self):
        cloud = ParticleCloud([[0.0, 0.0], [1.0, 1.0]])
        assert cloud.colors == [E, E]
        assert cloud.dimension == 2

    def test_empty_cloud(self):
        with pytest.raises(EmptyCloudError, match="empty cloud"):
            ParticleCloud(np.empty((0, 2)))

    def test_mixed_dimension_rejected(self):
        with pytest.raises(ValueError):
            ParticleCloud.from_particles([Particle(np.zeros(2), E), Particle(np.zeros(3), S)])

    def test_positions_are_immutable(self):
        src = np.zeros((2, 2))
        cloud = ParticleCloud(src)
        src[0, 0] = 9.0
        assert cloud.positions[0, 0] == 0.0
        with pytest.raises(ValueError):
            cloud.positions[0, 0] = 1.0

    def test_bsvgd_state(self):
        assert ParticleCloud([[0.0], [1.0]], [S, E]).is_bsvgd_state()
        assert not ParticleCloud([[0.0], [1.0]], [S, S]).is_bsvgd_state()
        assert not ParticleCloud([[0.0], [1.0]], [O, E]).is_bsvgd_state()

    def test_indexing_and_iteration(self):
        cloud = ParticleCloud([[0.0, 1.0], [2.0, 3.0]], [S, O])
        assert cloud[1].color is O
        np.testing.assert_array_equal(cloud[1].position, [2.0, 3.0])
        assert [p.color for p in cloud] == [S, O]
        assert ParticleCloud.from_particles(list(cloud)) == cloud


class TestEmpiricalMean:
    def test_single_point(self):
        np.testing.assert_array_equal(empirical_mean(ParticleCloud([[0.0, 0.0]])), [0.0, 0.0])

    def test_symmetric_pair(self):
        np.testing.assert_array_equal(empirical_mean(ParticleCloud([[1.0, 0.0], [-1.0, 0.0]])), [0.0, 0.0])

    def test_three_points(self):
        # hand sum: ((1+3+5)/3, (2+4+0)/3)
        np.testing.assert_array_equal(
            empirical_mean(ParticleCloud([[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]])), [3.0, 2.0]
        )


class TestCloneWithColor:
    def test_single(self):
        out = clone_with_color(ParticleCloud([[0.0, 0.0]], [E]), 0, S)
        assert out.colors == [S]

    def test_input_unmodified(self):
        cloud = ParticleCloud([[0.0, 0.0], [1.0, 1.0]], [S, E])
        out = clone_with_color(cloud, 1, O)
        assert out.colors == [S, O]
        assert cloud.colors == [S, E]
        np.testing.assert_array_equal(out.positions, cloud.positions)

    @pytest.mark.parametrize("index", [-1, 2, 10])
    def test_out_of_range(self, index):
        with pytest.raises(IndexError):
            clone_with_color(ParticleCloud([[0.0], [1.0]]), index, S)

    @settings(max_examples=50, deadline=None)
    @given(
        colors=st.lists(st.sampled_from(list(Color)), min_size=1, max_size=8),
        data=st.data(),
    )
    def test_recolor_round_trip(self, colors, data):
        cloud = ParticleCloud(np.arange(len(colors), dtype=float)[:, None], colors)
        i = data.draw(st.integers(0, len(colors) - 1))
        new = data.draw(st.sampled_from(list(Color)))
        once = clone_with_color(cloud, i, new)
        assert len(once) == len(cloud)
        assert clone_with_color(once, i, colors[i]) == cloud


class TestSeededRng:
    def test_million_draws_reproducible(self):
        a, b = SeededRng(7), SeededRng(7)
        np.testing.assert_array_equal(a.random(10**6), b.random(10**6))

    def test_different_seeds_differ(self):
        assert not np.array_equal(SeededRng(1).random(10), SeededRng(2).random(10))

    def test_spawn_is_deterministic_and_independent_of_consumption(self):
        a, b = SeededRng(3), SeededRng(3)
        b.random(100)
        np.testing.assert_array_equal(a.spawn(2)[1].random(5), b.spawn(2)[1].random(5))

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_seed_range(self, seed):
        with pytest.raises(ValueError):
            SeededRng(seed)

    def test_accepts_full_u64_range(self):
        SeededRng(2**64 - 1).random()


class TestSnapshotIO:
    def test_round_trip_exact(self, tmp_path, rng):
        pos = rng.normal(size=(20, 3)) * 1e3
        colors = [S] + [E, O] * 9 + [E]
        cloud = ParticleCloud(pos, colors)
        path = tmp_path / "snap.csv"
        write_snapshot(path, cloud)
        assert path.read_text().splitlines()[0] == "x0,x1,x2,color"
        assert read_snapshot(path) == cloud

    def test_color_column_optional(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("x0,x1\n0,0\n3,4\n")
        cloud = read_snapshot(path)
        assert cloud.colors == [E, E]

    def test_bad_row_is_located(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("x0,x1,color\n0,0,E\n1,oops,E\n")
        with pytest.raises(ValueError, match=":3:"):
            read_snapshot(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("a,b\n0,0\n")
        with pytest.raises(ValueError, match="header"):
            read_snapshot(path)
