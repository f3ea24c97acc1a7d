import pytest

from app.services.crypto_service import (
    Ed25519Backend, HmacBackend, derive_keypair, get_backend,
)


@pytest.fixture(params=["ed25519", "hmac"])
def backend(request):
    return get_backend(request.param)


def flip(data: bytes, bit: int = 0) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


def test_sign_verify_roundtrip(backend):
    keys = derive_keypair(1, 0, backend)
    sig = backend.sign(keys.sk, b"block message")
    assert backend.verify(keys.pk, b"block message", sig)


def test_verify_rejects_flipped_message_bit(backend):
    keys = derive_keypair(1, 0, backend)
    sig = backend.sign(keys.sk, b"block message")
    assert not backend.verify(keys.pk, flip(b"block message", 5), sig)


def test_verify_rejects_wrong_key(backend):
    keys = derive_keypair(1, 0, backend)
    other = derive_keypair(1, 1, backend)
    sig = backend.sign(keys.sk, b"m")
    assert not backend.verify(other.pk, b"m", sig)


def test_signatures_do_not_cross_verify(backend):
    keys = derive_keypair(1, 0, backend)
    assert not backend.verify(keys.pk, b"a", backend.sign(keys.sk, b"b"))


def test_malformed_material_is_false_not_error(backend):
    keys = derive_keypair(1, 0, backend)
    assert not backend.verify(keys.pk, b"m", b"")
    assert not backend.verify(keys.pk, b"m", b"\x00" * 3)
    assert not backend.verify(b"short", b"m", backend.sign(keys.sk, b"m"))


def test_vrf_roundtrip_and_determinism(backend):
    keys = derive_keypair(2, 3, backend)
    a = backend.vrf_eval(keys.sk, b"seed||LEADER")
    b = backend.vrf_eval(keys.sk, b"seed||LEADER")
    assert a.h == b.h and a.pi == b.pi
    assert len(a.h) == 32
    assert backend.vrf_verify(keys.pk, a.h, a.pi, b"seed||LEADER")


def test_vrf_rejects_tampering(backend):
    keys = derive_keypair(2, 3, backend)
    out = backend.vrf_eval(keys.sk, b"seed||LEADER")
    assert not backend.vrf_verify(keys.pk, out.h, out.pi, b"seeD||LEADER")
    assert not backend.vrf_verify(keys.pk, flip(out.h), out.pi, b"seed||LEADER")
    assert not backend.vrf_verify(keys.pk, out.h, flip(out.pi), b"seed||LEADER")


def test_keys_are_a_function_of_the_run_seed(backend):
    assert derive_keypair(5, 1, backend).pk == derive_keypair(5, 1, backend).pk
    assert derive_keypair(5, 1, backend).pk != derive_keypair(6, 1, backend).pk


def test_get_backend():
    assert isinstance(get_backend("ed25519"), Ed25519Backend)
    assert isinstance(get_backend("hmac"), HmacBackend)
    assert get_backend("hmac") is get_backend("hmac")
    with pytest.raises(ValueError):
        get_backend("rsa")
