"""Encryption engine: cipher catalogue, content methods, images, keys, escrow."""
from .content import ContentMethod, apply_content_method
from .drbg import Drbg
from .engine import (AuthenticationError, CorruptImage, DigestMismatch, EncryptedImage, FileKey,
                     IntegrityError, decrypt_image, encrypt_file, encrypt_ranges, header_len,
                     new_file_key, parse_header, size_model)
from .escrow import (EscrowEntry, EscrowFormatError, EscrowHeader, EscrowWriter,
                     campaign_private_from_escrow, decrypt_file, read_escrow, unwrap_file_key,
                     wrap_file_key)
from .keys import KeyHierarchy, KeyUnwrapError, derive_keys, unwrap_private_key
from .registry import (ALL_CIPHERS, CORE_REGISTRY, DEFAULT_REGISTRY, MANDATORY_CIPHERS, CipherError,
                       CipherRegistry, CipherSpec, KeySizeError, UnavailableCipher, canonical_name,
                       get_cipher)

__all__ = [n for n in dir() if not n.startswith("_")]
