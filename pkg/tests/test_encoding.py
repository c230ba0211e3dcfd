import base64
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from didsba.encoding import (
    b64u_decode,
    b64u_encode,
    canonical_json,
    frame,
    iter_frames,
    multibase_b58,
    multibase_b64u,
    multibase_decode,
    unframe,
)
from didsba.errors import EnvelopeFormatError, ValidationError


def test_canonical_json_is_sorted_and_compact():
    assert canonical_json({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}'


@given(st.dictionaries(st.text(), st.integers()))
def test_canonical_json_independent_of_insertion_order(d):
    reordered = dict(reversed(list(d.items())))
    assert canonical_json(d) == canonical_json(reordered)
    assert json.loads(canonical_json(d)) == d


@given(st.binary())
def test_b64u_roundtrip_without_padding(data):
    text = b64u_encode(data)
    assert "=" not in text
    assert b64u_decode(text) == data
    # oracle: stdlib urlsafe alphabet with padding restored
    assert base64.urlsafe_b64decode(text + "=" * (-len(text) % 4)) == data


@pytest.mark.parametrize("text", ["ab$c", "ab+c", "ab/c", "abc="[:3] + "=="])
def test_b64u_rejects_characters_outside_the_url_alphabet(text):
    with pytest.raises(ValidationError):
        b64u_decode(text)


@given(st.binary(min_size=1, max_size=64))
def test_multibase_roundtrip(data):
    assert multibase_b58(data)[0] == "z"
    assert multibase_b64u(data)[0] == "u"
    assert multibase_decode(multibase_b58(data)) == data
    assert multibase_decode(multibase_b64u(data)) == data


def test_multibase_unknown_prefix():
    with pytest.raises(ValidationError):
        multibase_decode("fdeadbeef")


@given(st.lists(st.binary(max_size=300), max_size=6))
def test_frames_roundtrip(fields):
    data = frame(*fields)
    assert len(data) == sum(4 + len(f) for f in fields)
    assert list(iter_frames(data)) == fields
    assert unframe(data, len(fields)) == fields


def test_unframe_rejects_truncation_and_trailing_bytes():
    data = frame(b"abc", b"defg")
    with pytest.raises(EnvelopeFormatError):
        unframe(data[:-1], 2)
    with pytest.raises(EnvelopeFormatError):
        unframe(data + b"x", 2)
