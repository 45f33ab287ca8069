import hashlib
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracesmith.cipher import (CORE_REGISTRY, MANDATORY_CIPHERS, AuthenticationError, ContentMethod,
                               DigestMismatch, Drbg, EscrowEntry, EscrowWriter, IntegrityError,
                               KeySizeError, UnavailableCipher, apply_content_method,
                               canonical_name, decrypt_file, decrypt_image, derive_keys,
                               encrypt_file, get_cipher, header_len, new_file_key, read_escrow,
                               size_model, unwrap_private_key, wrap_file_key)
from tracesmith.cipher.engine import SHUFFLE_SEGMENT
from tracesmith.cipher.modes import cts_decrypt, cts_encrypt, xts_decrypt, xts_encrypt
from tracesmith.corpus import synth_bytes
from tracesmith.vdev import entropy_exact

METHODS = [ContentMethod.full(), ContentMethod.first(4096), ContentMethod.last(4096),
           ContentMethod.segments(4096, 8192)]


def _key(cipher_id, seed=0):
    return new_file_key(get_cipher(cipher_id), Drbg(seed, cipher_id))


def _body(enc):
    return enc.image[enc.header.length:]


def test_mandatory_core_is_complete():
    expect = {f"AES-{b}-{m}" for b in (128, 192, 256) for m in ("CBC", "ECB", "CTR", "GCM", "XTS")}
    expect |= {"SALSA20", "CHACHA20", "SHUFFLE"}
    assert set(MANDATORY_CIPHERS) == expect


def test_unregistered_mode_is_an_error():
    get_cipher("AES-256-CBC", CORE_REGISTRY)
    with pytest.raises(UnavailableCipher):
        get_cipher("AES-256-OCB", CORE_REGISTRY)
    with pytest.raises(UnavailableCipher):
        get_cipher("AES-512-CBC")


def test_canonical_names():
    assert canonical_name("aes_cbc_256") == "AES-256-CBC"
    assert canonical_name("AES-CTR-128") == "AES-128-CTR"
    assert canonical_name("chacha20") == "CHACHA20"


def test_content_method_examples():
    assert apply_content_method(20480, ContentMethod.segments(4096, 8192)) == [(0, 4096), (12288, 16384)]
    assert apply_content_method(1000, ContentMethod.first(4096)) == [(0, 1000)]
    assert apply_content_method(1000, ContentMethod.last(10)) == [(990, 1000)]
    assert apply_content_method(0, ContentMethod.full()) == []
    assert apply_content_method(7, ContentMethod.full()) == [(0, 7)]


@pytest.mark.parametrize("bad", [dict(kind="first_n", n=0), dict(kind="segments", k=0, l=1),
                                 dict(kind="segments", k=1, l=-1), dict(kind="middle")])
def test_content_method_validation(bad):
    with pytest.raises(ValueError):
        ContentMethod(**bad)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(0, 200_000), k=st.integers(1, 9000), l=st.integers(0, 9000),
       kind=st.sampled_from(["full", "first_n", "last_n", "segments"]))
def test_ranges_disjoint_ascending_in_bounds(n, k, l, kind):
    m = ContentMethod(kind, n=k, k=k, l=l) if kind != "full" else ContentMethod.full()
    ranges = apply_content_method(n, m)
    prev = 0
    for s, e in ranges:
        assert prev <= s < e <= n
        prev = e


def test_size_model_examples():
    full = ContentMethod.full()
    h = header_len(1)
    assert size_model("CHACHA20", full, 5000) == h + 5000
    assert size_model("AES-256-CBC", full, 5000) == h + 16 + 5008
    assert size_model("AES-256-GCM", full, 5000) == h + 12 + 5000 + 16
    assert size_model("AES-128-ECB", full, 16) == h + 32
    assert size_model("AES-128-ECB", full, 0) == header_len(0)


def test_cbc_body_length_example():
    pt = os.urandom(5000)
    enc = encrypt_file(pt, "AES-256-CBC", ContentMethod.full(), _key("AES-256-CBC"))
    assert len(_body(enc)) == 16 + 5008
    enc = encrypt_file(pt, "CHACHA20", ContentMethod.full(), _key("CHACHA20"))
    assert len(_body(enc)) == 5000


@pytest.mark.parametrize("cipher_id", MANDATORY_CIPHERS)
@pytest.mark.parametrize("method", METHODS, ids=str)
def test_round_trip_matrix(cipher_id, method):
    pt = Drbg(11, "plain").read(37 * 1024)
    fk = _key(cipher_id)
    enc = encrypt_file(pt, cipher_id, method, fk)
    assert len(enc.image) == size_model(cipher_id, method, len(pt))
    digest = hashlib.sha256(pt).hexdigest()
    assert decrypt_image(enc.image, fk, digest) == pt


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 64 * 1024), cipher_id=st.sampled_from(MANDATORY_CIPHERS),
       method=st.sampled_from(METHODS + [ContentMethod.segments(100, 37), ContentMethod.first(1)]),
       seed=st.integers(0, 2**16))
def test_round_trip_and_size_property(n, cipher_id, method, seed):
    pt = Drbg(seed, "p").read(n)
    fk = _key(cipher_id, seed)
    enc = encrypt_file(pt, cipher_id, method, fk)
    assert len(enc.image) == size_model(cipher_id, method, n)
    assert decrypt_image(enc.image, fk) == pt


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 40_000), k=st.integers(1, 5000), l=st.integers(1, 5000),
       cipher_id=st.sampled_from(MANDATORY_CIPHERS))
def test_skipped_ranges_are_verbatim(n, k, l, cipher_id):
    pt = Drbg(n, "s").read(n)
    method = ContentMethod.segments(k, l)
    enc = encrypt_file(pt, cipher_id, method, _key(cipher_id))
    spec = get_cipher(cipher_id)
    src, pos = enc.header.length, 0
    for s, e in enc.header.ranges:
        assert enc.image[src:src + s - pos] == pt[pos:s]
        src += (s - pos) + spec.range_len(e - s)
        pos = e
    assert enc.image[src:] == pt[pos:]


@pytest.mark.parametrize("cipher_id", [c for c in MANDATORY_CIPHERS if c != "SHUFFLE"])
@pytest.mark.parametrize("kind", ["text", "csv", "binary-structured"])
def test_encrypted_ranges_are_high_entropy(cipher_id, kind):
    pt = synth_bytes(kind, np.random.default_rng(3), 16384)
    enc = encrypt_file(pt, cipher_id, ContentMethod.full(), _key(cipher_id))
    h = entropy_exact(_body(enc))
    if cipher_id.endswith("ECB") and kind == "binary-structured":
        # repeated plaintext blocks stay repeated under ECB
        assert h < 0.95
    else:
        assert h >= 0.95


def test_ecb_leaks_periodic_plaintext():
    # A 44-byte period lines up with the block size every 176 bytes, so ECB repeats.
    pt = (b"the quick brown fox jumps over the lazy dog\n" * 400)[:16384]
    body = _body(encrypt_file(pt, "AES-128-ECB", ContentMethod.full(), _key("AES-128-ECB")))
    assert entropy_exact(body) < 0.95
    ctr = _body(encrypt_file(pt, "AES-128-CTR", ContentMethod.full(), _key("AES-128-CTR")))
    assert entropy_exact(ctr) >= 0.95


def test_shuffle_is_a_block_permutation():
    pt = b"".join(bytes([i]) * SHUFFLE_SEGMENT for i in range(20)) + b"tail!"
    enc = encrypt_file(pt, "SHUFFLE", ContentMethod.full(), _key("SHUFFLE"))
    body = _body(enc)
    blocks = lambda b: [b[i:i + SHUFFLE_SEGMENT] for i in range(0, 20 * SHUFFLE_SEGMENT, SHUFFLE_SEGMENT)]
    assert sorted(blocks(body)) == sorted(blocks(pt))
    assert blocks(body) != blocks(pt)
    assert body.endswith(b"tail!")
    assert entropy_exact(body) == entropy_exact(pt)


def test_gcm_tamper_is_authentication_error():
    pt = os.urandom(9000)
    fk = _key("AES-256-GCM")
    img = bytearray(encrypt_file(pt, "AES-256-GCM", ContentMethod.full(), fk).image)
    img[header_len(1) + 100] ^= 1
    with pytest.raises(AuthenticationError):
        decrypt_image(bytes(img), fk)


def test_ctr_tamper_is_digest_mismatch():
    pt = os.urandom(9000)
    fk = _key("AES-256-CTR")
    img = bytearray(encrypt_file(pt, "AES-256-CTR", ContentMethod.full(), fk).image)
    img[header_len(1) + 100] ^= 1
    with pytest.raises(DigestMismatch):
        decrypt_image(bytes(img), fk, hashlib.sha256(pt).hexdigest())


def test_corrupt_header_is_integrity_error():
    fk = _key("CHACHA20")
    img = bytearray(encrypt_file(b"x" * 100, "CHACHA20", ContentMethod.full(), fk).image)
    img[0] ^= 0xFF
    with pytest.raises(IntegrityError):
        decrypt_image(bytes(img), fk)


def test_key_size_mismatch():
    with pytest.raises(KeySizeError):
        encrypt_file(b"abc", "AES-256-XTS", ContentMethod.full(), _key("AES-128-CBC"))


def test_xts_key_is_double_length():
    assert get_cipher("AES-256-XTS").key_len == 64
    assert get_cipher("AES-128-XTS").key_len == 32


@settings(max_examples=50, deadline=None)
@given(key_len=st.sampled_from([32, 64]), n=st.integers(16, 3000), seed=st.integers(0, 999))
def test_xts_matches_reference_implementation(key_len, n, seed):
    from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
    d = Drbg(seed, "xts")
    key, tweak, data = d.read(key_len), d.read(16), d.read(n)
    if key[:key_len // 2] == key[key_len // 2:]:
        return
    ref = Cipher(algorithms.AES(key), modes.XTS(tweak)).encryptor().update(data)
    assert xts_encrypt(key, tweak, data) == ref
    assert xts_decrypt(key, tweak, ref) == data


# CBC-CS3 vectors published for AES-128 with a zero IV (Kerberos AES-CTS)
_CTS_KEY = bytes.fromhex("636869636b656e207465726979616b69")
_CTS_VECTORS = [
    ("4920776f756c64206c696b652074686520", "c6353568f2bf8cb4d8a580362da7ff7f97"),
    ("4920776f756c64206c696b65207468652047656e6572616c20476175277320",
     "fc00783e0efdb2c1d445d4c8eff7ed2297687268d6ecccc0c07b25e25ecfe5"),
    ("4920776f756c64206c696b65207468652047656e6572616c2047617527732043",
     "39312523a78662d5be7fcbcc98ebf5a897687268d6ecccc0c07b25e25ecfe584"),
]


@pytest.mark.parametrize("pt,ct", _CTS_VECTORS)
def test_cts_vectors(pt, ct):
    pt, ct = bytes.fromhex(pt), bytes.fromhex(ct)
    assert cts_encrypt(_CTS_KEY, bytes(16), pt) == ct
    assert cts_decrypt(_CTS_KEY, bytes(16), ct, len(pt)) == pt


@settings(max_examples=50, deadline=None)
@given(n=st.integers(0, 500))
def test_cts_round_trip(n):
    d = Drbg(n, "cts")
    key, iv, data = d.read(16), d.read(16), d.read(n)
    assert cts_decrypt(key, iv, cts_encrypt(key, iv, data), n) == data


def test_derive_keys_deterministic_and_distinct(keys):
    again = derive_keys(7)
    assert again.server_public.n == keys.server_public.n
    assert derive_keys(8).server_public.n != keys.server_public.n
    assert keys.server_public.n.bit_length() >= 2048
    camp = unwrap_private_key(keys.server_private, keys.campaign_private_wrapped)
    assert camp.n == keys.campaign_public.n and camp.has_private()


def test_victim_view_holds_no_private_keys(keys):
    v = keys.victim_view()
    assert v.server_private is None and v.campaign_private is None
    with pytest.raises(Exception):
        v.unwrap_campaign()


def test_escrow_round_trip(tmp_path, keys):
    pt = os.urandom(7000)
    method = ContentMethod.segments(1024, 512)
    fk = _key("AES-192-CBC")
    enc = encrypt_file(pt, "AES-192-CBC", method, fk)
    entry = EscrowEntry("a/b.txt", "AES-192-CBC", method,
                        wrap_file_key(keys.campaign_public, fk, bytes(32)), len(pt),
                        hashlib.sha256(pt).hexdigest(), "a/b.txt.tsmx")
    path = tmp_path / "escrow.jsonl"
    with EscrowWriter(path, keys.victim_view(), ".tsmx") as w:
        w.append(entry)
    header, entries = read_escrow(path)
    assert entries == [entry]
    assert header.custom_extension == ".tsmx"
    server_only = type(keys)(keys.server_public, keys.campaign_public, header.campaign_private_wrapped,
                             server_private=keys.server_private)
    assert decrypt_file(enc.image, entries[0], server_only) == pt


def test_decrypt_file_rejects_mismatched_entry(keys):
    pt = os.urandom(100)
    fk = _key("CHACHA20")
    enc = encrypt_file(pt, "CHACHA20", ContentMethod.full(), fk)
    entry = EscrowEntry("x", "SALSA20", ContentMethod.full(),
                        wrap_file_key(keys.campaign_public, fk, bytes(32)), 100,
                        hashlib.sha256(pt).hexdigest(), "x.tsmx")
    with pytest.raises(DigestMismatch):
        decrypt_file(enc.image, entry, keys)
