"""
cpla_auth 测试
"""
import pytest
from hypothesis import given, settings, strategies as st

from crowdchain_sim.core import cpla_auth, crypto_core
from crowdchain_sim.core.cpla_auth import ATTESTATION_SIZE, Attestation, IdentityRegistry
from crowdchain_sim.core.exceptions import AuthError, DecodeError, DuplicateRegistration
from crowdchain_sim.core.relations import PREFIX_LEN

prefixes = st.binary(min_size=PREFIX_LEN, max_size=PREFIX_LEN)
suffixes = st.binary(max_size=64)


@pytest.fixture
def authority(backend):
    keys, pp = cpla_auth.setup(crypto_core.derive_seed(0, "ra"), backend)
    return keys, pp


@pytest.fixture
def user(authority):
    keys, _ = authority
    registry = IdentityRegistry()

    def _make(name):
        signing = crypto_core.sig_keygen(crypto_core.derive_seed(0, name))
        return signing, cpla_auth.cert_gen(keys.msk, signing.pk, name, registry)
    return _make


def _auth(message, user_keys, authority, backend):
    (signing, cert), (keys, pp) = user_keys, authority
    return cpla_auth.auth(message, signing.sk, signing.pk, cert, keys.mpk, pp, backend)


def test_certificate_verifies(authority, user):
    keys, _ = authority
    signing, cert = user("alice")
    assert cpla_auth.cert_verify(cert, signing.pk, keys.mpk)
    other = crypto_core.sig_keygen(crypto_core.derive_seed(0, "mallory"))
    assert not cpla_auth.cert_verify(cert, other.pk, keys.mpk)


def test_duplicate_identity(authority):
    keys, _ = authority
    registry = IdentityRegistry()
    pk = crypto_core.sig_keygen(crypto_core.derive_seed(0, "a")).pk
    cpla_auth.cert_gen(keys.msk, pk, "alice", registry)
    with pytest.raises(DuplicateRegistration):
        cpla_auth.cert_gen(keys.msk, pk, "alice", registry)
    assert "alice" in registry and len(registry) == 1


def test_auth_verify(authority, user, backend):
    keys, pp = authority
    message = b"p" * PREFIX_LEN + b"payload"
    attestation = _auth(message, user("alice"), authority, backend)
    assert len(attestation.to_bytes()) == ATTESTATION_SIZE == 97
    assert cpla_auth.verify(message, attestation, keys.mpk, pp, backend)
    assert not cpla_auth.verify(message + b"!", attestation, keys.mpk, pp, backend)
    assert not cpla_auth.verify(b"q" * PREFIX_LEN + b"payload", attestation, keys.mpk, pp, backend)


def test_linkability(authority, user, backend):
    alice, bob = user("alice"), user("bob")
    prefix = b"p" * PREFIX_LEN
    a1 = _auth(prefix + b"one", alice, authority, backend)
    a2 = _auth(prefix + b"two", alice, authority, backend)
    b1 = _auth(prefix + b"one", bob, authority, backend)
    a3 = _auth(b"q" * PREFIX_LEN + b"one", alice, authority, backend)
    assert cpla_auth.link(a1, a2)
    assert not cpla_auth.link(a1, b1)
    assert not cpla_auth.link(a1, a3)


def test_short_message(authority, user, backend):
    with pytest.raises(AuthError):
        _auth(b"short", user("alice"), authority, backend)
    keys, pp = authority
    attestation = _auth(b"p" * PREFIX_LEN, user("bob"), authority, backend)
    assert cpla_auth.verify(b"short", attestation, keys.mpk, pp, backend) is False


def test_rogue_key_cannot_use_certificate(authority, user, backend):
    _, cert = user("alice")
    rogue = crypto_core.sig_keygen(crypto_core.derive_seed(0, "rogue"))
    with pytest.raises(AuthError):
        _auth(b"p" * PREFIX_LEN, (rogue, cert), authority, backend)


def test_attestation_codec():
    with pytest.raises(DecodeError):
        Attestation.from_bytes(b"\x00" * 10)


def test_verify_rejects_non_attestation(authority, backend):
    keys, pp = authority
    assert cpla_auth.verify(b"p" * PREFIX_LEN, b"\x00" * 97, keys.mpk, pp, backend) is False


@settings(max_examples=20)
@given(prefix=prefixes, first=suffixes, second=suffixes)
def test_same_prefix_always_links(backend, prefix, first, second):
    keys, pp = cpla_auth.setup(crypto_core.derive_seed(0, "ra"), backend)
    signing = crypto_core.sig_keygen(crypto_core.derive_seed(0, "alice"))
    cert = cpla_auth.cert_gen(keys.msk, signing.pk, "alice")
    a = cpla_auth.auth(prefix + first, signing.sk, signing.pk, cert, keys.mpk, pp, backend)
    b = cpla_auth.auth(prefix + second, signing.sk, signing.pk, cert, keys.mpk, pp, backend)
    assert cpla_auth.link(a, b)
    assert cpla_auth.verify(prefix + first, a, keys.mpk, pp, backend)
    assert Attestation.from_bytes(a.to_bytes()) == a


def test_honest_attestations_verify(authority, backend):
    keys, pp = authority
    stream = crypto_core.RandomStream(crypto_core.derive_seed(0, "cpla-correctness"))
    for i in range(1_000):
        signing = crypto_core.sig_keygen(stream.read(32))
        cert = cpla_auth.cert_gen(keys.msk, signing.pk, f"user{i}")
        message = stream.read(PREFIX_LEN + i % 50)
        attestation = cpla_auth.auth(message, signing.sk, signing.pk, cert, keys.mpk, pp, backend)
        assert cpla_auth.verify(message, attestation, keys.mpk, pp, backend)
