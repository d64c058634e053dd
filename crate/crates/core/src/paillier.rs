//! Paillier public-key cryptosystem over arbitrary-precision integers.
//!
//! Public key `(n, g = n + 1)`, private key `(lambda, mu)` with
//! `lambda = lcm(p - 1, q - 1)` and `mu` the Bezout coefficient of
//! `L(g^lambda mod n^2)` against `n`, reduced mod `n`. Ciphertexts multiply
//! to add plaintexts and exponentiate to scale them.
//!
//! Plaintexts live in `[0, n)`. Signed quantities use the convention that a
//! residue above `n / 2` stands for `value - n`.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Modulus size used when none is requested.
pub const DEFAULT_KEY_BITS: u32 = 2048;
/// Smallest modulus [`KeyPair::generate`] accepts.
pub const MIN_KEY_BITS: u32 = 16;

const MILLER_RABIN_ROUNDS: usize = 64;
const KEY_ATTEMPTS: usize = 64;
const FORMAT_VERSION: u32 = 1;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    bits: u32,
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
    fingerprint: u64,
}

/// Decryption key. Deliberately not `Debug`-printable beyond its fingerprint.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    bits: u32,
    n: BigUint,
    n_squared: BigUint,
    lambda: BigUint,
    mu: BigUint,
    fingerprint: u64,
    crt: Crt,
}

/// Per-prime data for computing `r^n mod n^2` through `p^2` and `q^2`.
#[derive(Clone, PartialEq, Eq)]
struct Crt {
    p_squared: BigUint,
    q_squared: BigUint,
    /// `n mod p(p - 1)` and `n mod q(q - 1)`.
    exp_p: BigUint,
    exp_q: BigUint,
    /// `(q^2)^-1 mod p^2`.
    q_squared_inv: BigUint,
    p: BigUint,
    q: BigUint,
}

impl Crt {
    fn new(p: &BigUint, q: &BigUint) -> Result<Self> {
        let n = p * q;
        let p_squared = p * p;
        let q_squared = q * q;
        let ps = BigInt::from_biguint(Sign::Plus, p_squared.clone());
        let qs = BigInt::from_biguint(Sign::Plus, q_squared.clone());
        let (gcd, inv, _) = extended_euclid(&qs, &ps);
        if !gcd.is_one() {
            return Err(Error::KeyGeneration("p and q must be coprime".into()));
        }
        Ok(Crt {
            exp_p: &n % (p * (p - 1u32)),
            exp_q: &n % (q * (q - 1u32)),
            q_squared_inv: inv.mod_floor(&ps).to_biguint().expect("non-negative"),
            p_squared,
            q_squared,
            p: p.clone(),
            q: q.clone(),
        })
    }

    /// `r^n mod n^2` for `r` coprime to `n`.
    fn pow_n(&self, r: &BigUint) -> BigUint {
        let a = r.modpow(&self.exp_p, &self.p_squared);
        let b = r.modpow(&self.exp_q, &self.q_squared);
        // x = b + q^2 * ((a - b) * (q^2)^-1 mod p^2)
        let diff = (&a + &self.p_squared - (&b % &self.p_squared)) % &self.p_squared;
        let h = (diff * &self.q_squared_inv) % &self.p_squared;
        b + &self.q_squared * h
    }
}

#[derive(Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// A ciphertext tagged with the fingerprint of the key it was made under.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Ciphertext {
    value: BigUint,
    key: u64,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Plaintext(BigUint);

impl Plaintext {
    pub fn new(value: BigUint) -> Self {
        Plaintext(value)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn into_inner(self) -> BigUint {
        self.0
    }
}

impl From<u64> for Plaintext {
    fn from(v: u64) -> Self {
        Plaintext(BigUint::from(v))
    }
}

impl Ciphertext {
    /// Wraps a raw residue received from elsewhere, checking it is below `n^2`.
    pub fn from_value(value: BigUint, pk: &PublicKey) -> Result<Self> {
        if value >= pk.n_squared {
            return Err(Error::MalformedCiphertext);
        }
        Ok(Ciphertext {
            value,
            key: pk.fingerprint,
        })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_fingerprint(&self) -> u64 {
        self.key
    }

    /// Big-endian encoding left-padded to exactly `width` bytes.
    pub fn to_bytes_be(&self, width: usize) -> Vec<u8> {
        let raw = self.value.to_bytes_be();
        debug_assert!(raw.len() <= width);
        let mut out = vec![0u8; width];
        out[width - raw.len()..].copy_from_slice(&raw);
        out
    }
}

fn fingerprint_of(n: &BigUint) -> u64 {
    let digest = Sha256::digest(n.to_bytes_be());
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// `L(x) = (x - 1) / n`.
fn l_function(x: &BigUint, n: &BigUint) -> BigUint {
    (x - 1u32) / n
}

/// Extended Euclid: returns `(gcd, x, y)` with `a*x + b*y = gcd`.
pub(crate) fn extended_euclid(a: &BigInt, b: &BigInt) -> (BigInt, BigInt, BigInt) {
    let (mut old_r, mut r) = (a.clone(), b.clone());
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    let (mut old_t, mut t) = (BigInt::zero(), BigInt::one());
    while !r.is_zero() {
        let q = &old_r / &r;
        let next_r = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_s = &old_s - &q * &s;
        old_s = std::mem::replace(&mut s, next_s);
        let next_t = &old_t - &q * &t;
        old_t = std::mem::replace(&mut t, next_t);
    }
    if old_r.is_negative() {
        (-old_r, -old_s, -old_t)
    } else {
        (old_r, old_s, old_t)
    }
}

/// Uniform integer in `[0, bound)`.
fn random_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    assert!(!bound.is_zero());
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Uniform unit of `Z_n^*`, i.e. `0 < r < n` with `gcd(r, n) = 1`.
fn random_unit<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let r = random_below(n, rng);
        if !r.is_zero() && r.gcd(n).is_one() {
            return r;
        }
    }
}

/// Miller-Rabin with random bases after trial division by small primes.
pub fn is_probable_prime<R: RngCore + ?Sized>(candidate: &BigUint, rounds: usize, rng: &mut R) -> bool {
    if candidate < &BigUint::from(2u32) {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if candidate == &p {
            return true;
        }
        if (candidate % &p).is_zero() {
            return false;
        }
    }
    // Every composite below 257^2 has a factor in SMALL_PRIMES.
    if candidate < &BigUint::from(257u32 * 257) {
        return true;
    }

    let one = BigUint::one();
    let minus_one = candidate - 1u32;
    let mut d = minus_one.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }
    let base_range = candidate - 3u32;
    'witness: for _ in 0..rounds {
        let a = random_below(&base_range, rng) + 2u32;
        let mut x = a.modpow(&d, candidate);
        if x == one || x == minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % candidate;
            if x == minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random prime of exactly `bits` bits with the top two bits set.
fn random_prime<R: RngCore + ?Sized>(bits: u32, rng: &mut R) -> Result<BigUint> {
    let budget = 200 * bits as usize + 1000;
    let bytes = bits.div_ceil(8) as usize;
    let excess = bytes as u32 * 8 - bits;
    let mut buf = vec![0u8; bytes];
    for _ in 0..budget {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let mut candidate = BigUint::from_bytes_be(&buf);
        candidate.set_bit(u64::from(bits) - 1, true);
        candidate.set_bit(u64::from(bits) - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return Ok(candidate);
        }
    }
    Err(Error::KeyGeneration(format!(
        "no {bits}-bit prime found in {budget} candidates"
    )))
}

impl KeyPair {
    /// Generates a key pair whose modulus has exactly `key_bits` bits.
    pub fn generate<R: RngCore + ?Sized>(key_bits: u32, rng: &mut R) -> Result<Self> {
        if key_bits < MIN_KEY_BITS {
            return Err(Error::KeyGeneration(format!(
                "key size {key_bits} below minimum {MIN_KEY_BITS}"
            )));
        }
        let p_bits = key_bits.div_ceil(2);
        let q_bits = key_bits / 2;
        for _ in 0..KEY_ATTEMPTS {
            let p = random_prime(p_bits, rng)?;
            let q = random_prime(q_bits, rng)?;
            if p == q {
                continue;
            }
            match Self::from_primes(&p, &q) {
                Ok(kp) if kp.public.bits == key_bits => return Ok(kp),
                _ => continue,
            }
        }
        Err(Error::KeyGeneration(format!(
            "no valid {key_bits}-bit key after {KEY_ATTEMPTS} attempts"
        )))
    }

    /// Builds the key pair for caller-supplied primes `p != q`.
    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<Self> {
        let one = BigUint::one();
        if p == q || p <= &one || q <= &one {
            return Err(Error::KeyGeneration("p and q must be distinct primes".into()));
        }
        let n = p * q;
        let n_squared = &n * &n;
        let g = &n + 1u32;
        let lambda = (p - 1u32).lcm(&(q - 1u32));

        let u = l_function(&g.modpow(&lambda, &n_squared), &n);
        let u_signed = BigInt::from_biguint(Sign::Plus, u);
        let n_signed = BigInt::from_biguint(Sign::Plus, n.clone());
        let (gamma, alpha, beta) = extended_euclid(&u_signed, &n_signed);
        debug_assert_eq!(&alpha * &u_signed + &beta * &n_signed, gamma);
        if !gamma.is_one() {
            return Err(Error::KeyGeneration(format!(
                "gcd(L(g^lambda mod n^2), n) = {gamma}, expected 1"
            )));
        }
        let mu = alpha
            .mod_floor(&n_signed)
            .to_biguint()
            .expect("mod_floor by a positive modulus is non-negative");

        let bits = n.bits() as u32;
        let fingerprint = fingerprint_of(&n);
        Ok(KeyPair {
            public: PublicKey {
                bits,
                n: n.clone(),
                g,
                n_squared: n_squared.clone(),
                fingerprint,
            },
            private: PrivateKey {
                bits,
                n,
                n_squared,
                lambda,
                mu,
                fingerprint,
                crt: Crt::new(p, q)?,
            },
        })
    }
}

impl PublicKey {
    fn from_modulus(bits: u32, n: BigUint) -> Self {
        let n_squared = &n * &n;
        PublicKey {
            bits,
            g: &n + 1u32,
            fingerprint: fingerprint_of(&n),
            n,
            n_squared,
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Fixed byte width of a serialized ciphertext under this key.
    pub fn ciphertext_width(&self) -> usize {
        self.n_squared.bits().div_ceil(8) as usize
    }

    fn check(&self, c: &Ciphertext) -> Result<()> {
        if c.key != self.fingerprint {
            return Err(Error::KeyMismatch);
        }
        Ok(())
    }

    /// `g^m * r^n mod n^2` with a fresh unit `r`.
    pub fn encrypt<R: RngCore + ?Sized>(&self, m: &Plaintext, rng: &mut R) -> Result<Ciphertext> {
        let r = random_unit(&self.n, rng);
        self.encrypt_with_randomness(m, &r)
    }

    /// Encryption with caller-chosen randomness `r`.
    pub fn encrypt_with_randomness(&self, m: &Plaintext, r: &BigUint) -> Result<Ciphertext> {
        if m.0 >= self.n {
            return Err(Error::PlaintextRange);
        }
        if r.is_zero() || r >= &self.n || !r.gcd(&self.n).is_one() {
            return Err(Error::InvalidRandomness);
        }
        // g = n + 1, so g^m = 1 + m*n (mod n^2).
        let g_m = (BigUint::one() + &m.0 * &self.n) % &self.n_squared;
        let r_n = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext {
            value: (g_m * r_n) % &self.n_squared,
            key: self.fingerprint,
        })
    }

    /// Ciphertext product; decrypts to `(m1 + m2) mod n`.
    pub fn homomorphic_add(&self, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext> {
        self.check(c1)?;
        self.check(c2)?;
        Ok(Ciphertext {
            value: (&c1.value * &c2.value) % &self.n_squared,
            key: self.fingerprint,
        })
    }

    /// Ciphertext power; decrypts to `(s * m) mod n`. Negative `s` is taken mod `n`.
    pub fn scalar_multiply(&self, c: &Ciphertext, s: &BigInt) -> Result<Ciphertext> {
        self.check(c)?;
        let n = BigInt::from_biguint(Sign::Plus, self.n.clone());
        let exponent = s
            .mod_floor(&n)
            .to_biguint()
            .expect("mod_floor by a positive modulus is non-negative");
        Ok(Ciphertext {
            value: c.value.modpow(&exponent, &self.n_squared),
            key: self.fingerprint,
        })
    }

    /// Multiplies in a fresh `r^n`, leaving the plaintext unchanged.
    pub fn rerandomize<R: RngCore + ?Sized>(&self, c: &Ciphertext, rng: &mut R) -> Result<Ciphertext> {
        self.check(c)?;
        let r = random_unit(&self.n, rng);
        Ok(Ciphertext {
            value: (&c.value * r.modpow(&self.n, &self.n_squared)) % &self.n_squared,
            key: self.fingerprint,
        })
    }

    /// Encodes a signed value as a residue; `|v|` must be below `n / 2`.
    pub fn encode_signed(&self, v: &BigInt) -> Result<Plaintext> {
        let n = BigInt::from_biguint(Sign::Plus, self.n.clone());
        if v.abs() * 2 >= n {
            return Err(Error::PlaintextRange);
        }
        Ok(Plaintext(v.mod_floor(&n).to_biguint().expect("non-negative")))
    }

    /// Residues above `n / 2` decode to `value - n`.
    pub fn decode_signed(&self, m: &Plaintext) -> BigInt {
        decode_signed(&m.0, &self.n)
    }

    pub fn to_text(&self) -> String {
        format!(
            "# hvh Paillier public key\nformat = hvh-paillier-public\nversion = {FORMAT_VERSION}\nkey_bits = {}\nn = {}\n",
            self.bits,
            self.n.to_str_radix(16)
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = KeyFields::parse(text, "hvh-paillier-public")?;
        let n = fields.hex("n")?;
        let bits = fields.bits()?;
        if n.bits() as u32 != bits || n <= BigUint::one() {
            return Err(Error::KeyFormat(format!(
                "modulus has {} bits, header says {bits}",
                n.bits()
            )));
        }
        Ok(PublicKey::from_modulus(bits, n))
    }
}

pub(crate) fn decode_signed(m: &BigUint, n: &BigUint) -> BigInt {
    let v = BigInt::from_biguint(Sign::Plus, m.clone());
    if m * 2u32 > *n {
        v - BigInt::from_biguint(Sign::Plus, n.clone())
    } else {
        v
    }
}

impl PrivateKey {
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Encryption using the factorisation of `n`. Produces exactly what
    /// [`PublicKey::encrypt`] would for the same randomness, about twice as fast.
    pub fn encrypt<R: RngCore + ?Sized>(&self, m: &Plaintext, rng: &mut R) -> Result<Ciphertext> {
        let r = random_unit(&self.n, rng);
        self.encrypt_with_randomness(m, &r)
    }

    pub fn encrypt_with_randomness(&self, m: &Plaintext, r: &BigUint) -> Result<Ciphertext> {
        if m.0 >= self.n {
            return Err(Error::PlaintextRange);
        }
        if r.is_zero() || r >= &self.n || !r.gcd(&self.n).is_one() {
            return Err(Error::InvalidRandomness);
        }
        let g_m = BigUint::one() + &m.0 * &self.n;
        Ok(Ciphertext {
            value: (g_m * self.crt.pow_n(r)) % &self.n_squared,
            key: self.fingerprint,
        })
    }

    /// The matching public key (derivable from `n` alone).
    pub fn public_key(&self) -> PublicKey {
        PublicKey::from_modulus(self.bits, self.n.clone())
    }

    /// `L(c^lambda mod n^2) * mu mod n`.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<Plaintext> {
        if c.key != self.fingerprint {
            return Err(Error::KeyMismatch);
        }
        if c.value.is_zero() || c.value >= self.n_squared || !c.value.gcd(&self.n).is_one() {
            return Err(Error::MalformedCiphertext);
        }
        let x = c.value.modpow(&self.lambda, &self.n_squared);
        Ok(Plaintext((l_function(&x, &self.n) * &self.mu) % &self.n))
    }

    /// Decrypts and applies the signed convention.
    pub fn decrypt_signed(&self, c: &Ciphertext) -> Result<BigInt> {
        let m = self.decrypt(c)?;
        Ok(decode_signed(&m.0, &self.n))
    }

    pub fn to_text(&self) -> String {
        format!(
            "# hvh Paillier private key\nformat = hvh-paillier-private\nversion = {FORMAT_VERSION}\nkey_bits = {}\nn = {}\np = {}\nq = {}\nlambda = {}\nmu = {}\n",
            self.bits,
            self.n.to_str_radix(16),
            self.crt.p.to_str_radix(16),
            self.crt.q.to_str_radix(16),
            self.lambda.to_str_radix(16),
            self.mu.to_str_radix(16)
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = KeyFields::parse(text, "hvh-paillier-private")?;
        let bits = fields.bits()?;
        let n = fields.hex("n")?;
        let p = fields.hex("p")?;
        let q = fields.hex("q")?;
        let lambda = fields.hex("lambda")?;
        let mu = fields.hex("mu")?;
        if n.bits() as u32 != bits || n <= BigUint::one() {
            return Err(Error::KeyFormat("modulus does not match key_bits".into()));
        }
        if &p * &q != n || p <= BigUint::one() || q <= BigUint::one() || p == q {
            return Err(Error::KeyFormat("p * q does not equal n".into()));
        }
        if lambda != (&p - 1u32).lcm(&(&q - 1u32)) {
            return Err(Error::KeyFormat("lambda is not lcm(p - 1, q - 1)".into()));
        }
        let crt = Crt::new(&p, &q).map_err(|e| Error::KeyFormat(e.to_string()))?;
        let n_squared = &n * &n;
        let g = &n + 1u32;
        let u = l_function(&g.modpow(&lambda, &n_squared), &n);
        if mu.is_zero() || mu >= n || !((&mu * u) % &n).is_one() {
            return Err(Error::KeyFormat("mu is not the inverse of L(g^lambda) mod n".into()));
        }
        Ok(PrivateKey {
            bits,
            fingerprint: fingerprint_of(&n),
            n,
            n_squared,
            lambda,
            mu,
            crt,
        })
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("bits", &self.bits)
            .field("fingerprint", &format_args!("{:016x}", self.fingerprint))
            .finish()
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey")
            .field("bits", &self.bits)
            .field("fingerprint", &format_args!("{:016x}", self.fingerprint))
            .finish_non_exhaustive()
    }
}

struct KeyFields<'a> {
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> KeyFields<'a> {
    fn parse(text: &'a str, format: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::KeyFormat(format!("expected key = value, got {line:?}")))?;
            pairs.push((k.trim(), v.trim()));
        }
        let fields = KeyFields { pairs };
        let found = fields.get("format")?;
        if found != format {
            return Err(Error::KeyFormat(format!("expected {format}, found {found}")));
        }
        let version: u32 = fields
            .get("version")?
            .parse()
            .map_err(|_| Error::KeyFormat("bad version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::KeyFormat(format!("unsupported key file version {version}")));
        }
        Ok(fields)
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        self.pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::KeyFormat(format!("missing field {key}")))
    }

    fn hex(&self, key: &str) -> Result<BigUint> {
        BigUint::parse_bytes(self.get(key)?.as_bytes(), 16)
            .ok_or_else(|| Error::KeyFormat(format!("field {key} is not hex")))
    }

    fn bits(&self) -> Result<u32> {
        self.get("key_bits")?
            .parse()
            .map_err(|_| Error::KeyFormat("bad key_bits".into()))
    }
}
