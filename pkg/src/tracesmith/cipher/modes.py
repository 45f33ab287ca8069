"""AES modes the backing library lacks: XTS (IEEE 1619) and CBC ciphertext stealing (CS3)."""
from __future__ import annotations

import numpy as np
from Crypto.Cipher import AES

_GF_MASK = (1 << 128) - 1


def _xts_tweaks(t0: int, nblocks: int) -> bytes:
    out = bytearray()
    t = t0
    for _ in range(nblocks):
        out += t.to_bytes(16, "little")
        carry = t >> 127
        t = ((t << 1) & _GF_MASK) ^ (0x87 if carry else 0)
    return bytes(out)


def _xor(a: bytes, b: bytes) -> bytes:
    return (np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)).tobytes()


def _xts(key: bytes, tweak: bytes, data: bytes, encrypt: bool) -> bytes:
    half = len(key) // 2
    k1 = AES.new(key[:half], AES.MODE_ECB)
    k2 = AES.new(key[half:], AES.MODE_ECB)
    t0 = int.from_bytes(k2.encrypt(tweak), "little")
    n = len(data)
    if n < 16:
        # Too short for a block: XOR with E_K1(T) so the size still holds.
        ks = k1.encrypt(t0.to_bytes(16, "little"))
        return _xor(data, ks[:n])
    full, rem = divmod(n, 16)
    tw = _xts_tweaks(t0, full + 1)
    op = k1.encrypt if encrypt else k1.decrypt
    if rem == 0:
        t = tw[:16 * full]
        return _xor(op(_xor(data, t)), t)
    # ciphertext stealing over the last full block and the partial tail
    head = 16 * (full - 1)
    t_head = tw[:head]
    out = bytearray(_xor(op(_xor(data[:head], t_head)), t_head)) if head else bytearray()
    t_m1, t_m = tw[head:head + 16], tw[head + 16:head + 32]
    if encrypt:
        last_full = data[head:head + 16]
        cc = _xor(op(_xor(last_full, t_m1)), t_m1)
        tail = data[head + 16:]
        pp = tail + cc[rem:]
        c_last = _xor(op(_xor(pp, t_m)), t_m)
        out += c_last + cc[:rem]
    else:
        c_last = data[head:head + 16]
        pp = _xor(op(_xor(c_last, t_m)), t_m)
        tail_c = data[head + 16:]
        cc = tail_c + pp[rem:]
        p_full = _xor(op(_xor(cc, t_m1)), t_m1)
        out += p_full + pp[:rem]
    return bytes(out)


def xts_encrypt(key: bytes, tweak: bytes, data: bytes) -> bytes:
    return _xts(key, tweak, data, True)


def xts_decrypt(key: bytes, tweak: bytes, data: bytes) -> bytes:
    return _xts(key, tweak, data, False)


def cts_encrypt(key: bytes, iv: bytes, data: bytes) -> bytes:
    """CBC-CS3. Inputs shorter than a block are zero-padded to one block."""
    n = len(data)
    if n <= 16:
        return AES.new(key, AES.MODE_CBC, iv=iv).encrypt(data + bytes(16 - n))
    nb = -(-n // 16)
    d = n - 16 * (nb - 1)
    c = AES.new(key, AES.MODE_CBC, iv=iv).encrypt(data + bytes(16 * nb - n))
    return c[:16 * (nb - 2)] + c[16 * (nb - 1):] + c[16 * (nb - 2):16 * (nb - 2) + d]


def cts_decrypt(key: bytes, iv: bytes, data: bytes, n: int) -> bytes:
    if n <= 16:
        if len(data) != 16:
            raise ValueError("CTS frame has the wrong length")
        return AES.new(key, AES.MODE_CBC, iv=iv).decrypt(data)[:n]
    if len(data) != n:
        raise ValueError("CTS frame has the wrong length")
    nb = -(-n // 16)
    d = n - 16 * (nb - 1)
    head, x, y = data[:16 * (nb - 2)], data[16 * (nb - 2):16 * (nb - 1)], data[16 * (nb - 1):]
    z = AES.new(key, AES.MODE_ECB).decrypt(x)
    c_m1 = y + z[d:]
    p_last = _xor(z[:d], y)
    p_head = AES.new(key, AES.MODE_CBC, iv=iv).decrypt(head + c_m1)
    return p_head + p_last
