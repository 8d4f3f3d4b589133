//! Keyed counter-based random streams.
//!
//! A stream is addressed by a [`StreamKey`]; its bits are the Philox4x64-10
//! blocks of successive counters under a key derived from the master seed
//! and the trial number. Distinct keys map to disjoint counter ranges, so the
//! bits a stream produces never depend on which other streams were used, or
//! in which order.

/// Phase of the estimator consuming a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Phase {
    /// Normalizing a predecessor's sample set to the common probability.
    Normalize = 1,
    /// Thinning the union down to the state's own probability.
    Thin = 2,
    /// Free-standing draws (tests, tools).
    Other = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub trial: u64,
    pub layer: u32,
    pub state: u32,
    pub replica: u64,
    pub phase: Phase,
    pub item: u64,
}

impl StreamKey {
    pub fn new(trial: u64, layer: u32, state: u32, replica: u64, phase: Phase, item: u64) -> Self {
        StreamKey {
            trial,
            layer,
            state,
            replica,
            phase,
            item,
        }
    }
}

const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = a as u128 * b as u128;
    ((p >> 64) as u64, p as u64)
}

/// The Philox4x64 bijection with 10 rounds.
pub fn philox4x64_10(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Philox key for one trial of one master seed.
pub fn trial_key(master_seed: u64, trial: u64) -> [u64; 2] {
    let a = splitmix64(master_seed);
    let b = splitmix64(a ^ splitmix64(trial ^ 0x5851_F42D_4C95_7F2D));
    [splitmix64(b), splitmix64(b ^ 0x1405_7B7E_F767_814F)]
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    key: [u64; 2],
    counter: [u64; 4],
    block: [u64; 4],
    used: usize,
    /// Upper half of the last word split by [`RandomStream::next_u32`].
    spare: Option<u32>,
}

impl RandomStream {
    pub fn new(master_seed: u64, key: &StreamKey) -> Self {
        Self::with_trial_key(trial_key(master_seed, key.trial), key)
    }

    /// Like [`RandomStream::new`] with the trial key computed once by the caller.
    pub fn with_trial_key(trial_key: [u64; 2], key: &StreamKey) -> Self {
        assert!(key.item < 1 << 48, "stream item index out of range");
        RandomStream {
            key: trial_key,
            counter: [
                (key.layer as u64) << 32 | key.state as u64,
                key.replica,
                (key.phase as u64) << 48 | key.item,
                0,
            ],
            block: [0; 4],
            used: 4,
            spare: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        if self.used == 4 {
            self.block = philox4x64_10(self.counter, self.key);
            self.counter[3] = self.counter[3].wrapping_add(1);
            self.used = 0;
        }
        let v = self.block[self.used];
        self.used += 1;
        v
    }

    /// Uniform 32-bit value; each generated word serves two calls.
    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let v = self.next_u64();
        self.spare = Some((v >> 32) as u32);
        v as u32
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
