import numpy as np
import pytest

from fdfnet.errors import ShapeError, UsageError
from fdfnet.params import PRELU_INIT, ParamStore


@pytest.fixture
def store():
    params = ParamStore(np.random.default_rng(0))
    params.conv("enc1.conv", 16, 1, (3, 2))
    params.batch_norm("enc1.bn", 16)
    params.prelu("enc1.prelu", 16)
    params.gru_layer("rnn1", 8, 4)
    params.linear("fc", 5, 4)
    return params


class TestParamStore:
    def test_conv_parameter_count(self, store):
        assert store.count("enc1.conv") == 16 * 1 * 3 * 2 + 16 == 112

    def test_initializer_bounds(self, store):
        bound = 1.0 / np.sqrt(1 * 3 * 2)
        assert np.all(np.abs(store["enc1.conv.weight"].data) <= bound)
        assert np.all(np.abs(store["rnn1.w_hh"].data) <= 0.5)
        np.testing.assert_array_equal(store["enc1.prelu.slope"].data, np.full(16, PRELU_INIT, np.float32))
        np.testing.assert_array_equal(store["enc1.bn.scale"].data, np.ones(16))

    def test_deconv_bound_uses_output_channels(self):
        params = ParamStore(np.random.default_rng(0))
        params.deconv("dec1.deconv", 8, 2, (5, 2))
        assert params["dec1.deconv.weight"].shape == (8, 2, 5, 2)
        assert np.max(np.abs(params["dec1.deconv.weight"].data)) <= 1.0 / np.sqrt(2 * 5 * 2)

    def test_buffers_are_not_parameters(self, store):
        assert "enc1.bn.running_mean" not in store
        np.testing.assert_array_equal(store.buffer("enc1.bn.running_var"), np.ones(16))
        assert store.count("enc1.bn") == 32

    def test_gru_view(self, store):
        gru = store.gru("rnn1")
        assert gru.hidden == 4
        assert gru.w_ih.shape == (12, 8)

    def test_layer_table(self, store):
        table = store.layer_table()
        assert list(table["layer"]) == ["enc1.conv", "enc1.bn", "enc1.prelu", "rnn1", "fc"]
        assert table["params"].sum() == store.count()
        assert "weight[16, 1, 3, 2]" in table.loc[0, "shapes"]

    def test_duplicate_and_unknown_names(self, store):
        with pytest.raises(UsageError):
            store.linear("fc", 5, 4)
        with pytest.raises(UsageError):
            store["nope"]
        with pytest.raises(UsageError):
            store.buffer("nope")

    def test_initializing_needs_a_generator(self):
        with pytest.raises(UsageError, match="rng"):
            ParamStore().linear("fc", 2, 2)

    def test_freeze(self, store):
        store.freeze()
        assert not any(t.requires_grad for t in store.tensors())

    def test_state_round_trip(self, store):
        params, buffers = store.state()
        clone = ParamStore(np.random.default_rng(5))
        clone.conv("enc1.conv", 16, 1, (3, 2))
        clone.batch_norm("enc1.bn", 16)
        clone.prelu("enc1.prelu", 16)
        clone.gru_layer("rnn1", 8, 4)
        clone.linear("fc", 5, 4)
        clone.load_state(params, buffers)
        for name, tensor in store.items():
            np.testing.assert_array_equal(clone[name].data, tensor.data)

    def test_load_state_checks_names_and_shapes(self, store):
        params, buffers = store.state()
        bad = dict(params)
        bad["fc.bias"] = np.zeros(7)
        with pytest.raises(ShapeError, match="fc.bias"):
            store.load_state(bad, buffers)
        missing = dict(params)
        del missing["fc.bias"]
        with pytest.raises(ShapeError, match="missing"):
            store.load_state(missing, buffers)

    def test_astype_is_a_deep_copy(self, store):
        wide = store.astype(np.float64)
        assert wide.dtype == np.float64
        assert wide["fc.weight"].dtype == np.float64
        wide["fc.weight"].data[...] = 0.0
        wide.buffer("enc1.bn.running_mean")[...] = 3.0
        assert np.any(store["fc.weight"].data != 0.0)
        assert not np.any(store.buffer("enc1.bn.running_mean"))

    def test_copy_keeps_frozen_flags(self, store):
        store["fc.bias"].requires_grad = False
        assert not store.copy()["fc.bias"].requires_grad
