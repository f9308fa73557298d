import numpy as np
import pytest

from wpir.core import SystemParams, make_permutation
from wpir.errors import IndexOutOfRange, InvalidParams, MalformedAnswers, StoreFormatError, TooLarge
from wpir.scheme import (
    Coded,
    Direct,
    Escape,
    MessageStore,
    Vec,
    answer,
    decode,
    download_symbols,
    encode_queries,
    enumerate_key_space,
    interference,
    key_from_dict,
    key_to_dict,
    query_answer_table,
    render_table,
    table_key_order,
    validate_key,
)


def test_key_space_size(params32):
    keys = enumerate_key_space(params32)
    assert len(keys) == 21
    assert keys[:3] == [Direct(1), Direct(2), Direct(3)]
    assert len(set(keys)) == 21


def test_key_space_guard():
    with pytest.raises(TooLarge):
        enumerate_key_space(SystemParams(9, 3))


def test_direct_queries(params32):
    assert encode_queries(1, Direct(2), params32) == [Vec((0, 0)), Escape(1), Vec((0, 0))]


def test_coded_queries(params32):
    key = Coded((1,), make_permutation((2, 1, 0)))
    assert [str(q) for q in encode_queries(1, key, params32)] == ["11", "01", "21"]
    assert [str(q) for q in encode_queries(2, key, params32)] == ["11", "10", "12"]


def test_answers_and_decode(params32):
    store = MessageStore(params32, np.array([[0x11, 0x22], [0x44, 0x88]]))
    key = Coded((1,), make_permutation((2, 1, 0)))
    answers = [answer(q, store) for q in encode_queries(1, key, params32)]
    assert answers == [bytes([0x11 ^ 0x44]), bytes([0x44]), bytes([0x22 ^ 0x44])]
    assert decode(answers, 1, key, params32) == bytes([0x11, 0x22])
    assert interference((1,), 1, store) == 0x44
    assert download_symbols(answers) == 3


def test_zero_query_answers_nothing(params32, store32):
    assert answer(Vec((0, 0)), store32) == b""
    assert answer(Escape(2), store32) == store32.message(2)


def _check_all_keys(params, store):
    for k in range(1, params.K + 1):
        for key in enumerate_key_space(params):
            answers = [answer(q, store) for q in encode_queries(k, key, params)]
            assert decode(answers, k, key, params) == store.message(k), f"k={k} key={key}"
            used = download_symbols(answers)
            if isinstance(key, Direct) or not any(key.f):
                assert used == params.L
            else:
                assert used == params.N


def test_retrieval_exhaustive_3_2(params32, rng):
    for _ in range(100):
        _check_all_keys(params32, MessageStore.random(params32, rng))


@pytest.mark.parametrize("N, K", [(2, 2), (3, 3), (4, 2), (4, 3)])
def test_retrieval_sweep(N, K, rng):
    params = SystemParams(N, K)
    for _ in range(3):
        _check_all_keys(params, MessageStore.random(params, rng))


def test_decode_rejects_bad_answers(params32, store32):
    key = Direct(1)
    answers = [answer(q, store32) for q in encode_queries(1, key, params32)]
    with pytest.raises(MalformedAnswers):
        decode(answers[:2], 1, key, params32)
    with pytest.raises(MalformedAnswers):
        decode([b"\x00"] + answers[1:], 1, key, params32)


def test_message_index(params32):
    with pytest.raises(IndexOutOfRange):
        encode_queries(3, Direct(1), params32)
    with pytest.raises(IndexOutOfRange):
        encode_queries(0, Direct(1), params32)


def test_validate_key(params32):
    with pytest.raises(InvalidParams):
        validate_key(Direct(4), params32)
    with pytest.raises(InvalidParams):
        validate_key(Coded((3,), make_permutation((0, 1, 2))), params32)
    with pytest.raises(InvalidParams):
        validate_key(Coded((1,), make_permutation((0, 1))), params32)


def test_key_dict(params32):
    for key in enumerate_key_space(params32):
        assert key_from_dict(key_to_dict(key)) == key


def test_store_file(params32, store32, tmp_path):
    path = tmp_path / "store.wpir"
    store32.save(path)
    loaded = MessageStore.load(path)
    assert loaded.params.N == 3 and loaded.params.K == 2
    assert loaded.message(1) == store32.message(1)
    assert loaded.message(2) == store32.message(2)


def test_store_format_errors(store32):
    blob = store32.to_bytes()
    with pytest.raises(StoreFormatError):
        MessageStore.from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(StoreFormatError):
        MessageStore.from_bytes(blob[:3])
    with pytest.raises(StoreFormatError):
        MessageStore.from_bytes(blob[:-1])


def test_store_shape(params32):
    with pytest.raises(StoreFormatError):
        MessageStore(params32, np.zeros((2, 3)))


def test_table_order(params32):
    keys = table_key_order(params32)
    assert keys[:3] == [Direct(1), Direct(2), Direct(3)]
    assert [key.pi.image for key in keys[3:9]] == [(2, 1, 0), (2, 0, 1), (1, 2, 0), (1, 0, 2), (0, 2, 1), (0, 1, 2)]
    assert all(key.f == (1,) for key in keys[9:15])


def test_table_rows(params32):
    rows = query_answer_table(params32, 1)
    assert len(rows) == 21
    assert rows[0].queries == ["#_1", "00", "00"]
    assert rows[0].answers == ["a_1,a_2", "∅", "∅"]
    row = rows[9]
    assert row.F == "1" and row.pi_or_n == "(2,1,0)"
    assert row.queries == ["11", "01", "21"]
    assert row.answers == ["a_1⊕b_1", "b_1", "a_2⊕b_1"]


def test_render_table(params32):
    text = render_table(params32, 2)
    lines = text.splitlines()
    assert lines[0] == "Requesting message k=2"
    # title, header, rule and one line per key
    assert len(lines) == 3 + 21
    assert "Q_3^[2]" in lines[1]
