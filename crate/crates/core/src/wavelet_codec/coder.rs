//! Global bit-plane coder. Planes run from the most significant down; each
//! plane has a significance pass (a flag per subband, then adaptive
//! Rice-coded runs of insignificant coefficients, each run followed by a
//! sign) and a refinement pass (one raw bit per previously significant
//! coefficient). Every code word is a
//! self-contained symbol, so a prefix decodes to exactly the symbols it
//! holds in full.

use crate::bitio::{BitReader, BitWriter};
use crate::error::{Error, Result};

pub(crate) const PLANE_BITS: u32 = 6;
pub(crate) const MAX_PLANES: u32 = 62;
const K0_BITS: u32 = 5;
const ESCAPE: u64 = 32;
const RAW_RUN_BITS: u32 = 40;
const RICE_RESET: u64 = 32;

/// Quantized magnitudes and signs of one (subband, channel) slot, raster
/// order within the subband.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Slot {
    pub mags: Vec<u64>,
    pub neg: Vec<bool>,
    pub step: f64,
    /// Reconstruct fully decoded coefficients at the bin edge, not its
    /// midpoint. Set for reversible integer coefficients at unit step.
    pub exact: bool,
}

/// Dead-zone reconstruction of a coefficient whose magnitude is known down
/// to bit `plane` (`known = mag >> plane`).
#[inline]
pub(crate) fn dequantize(known: u64, plane: u32, neg: bool, step: f64, exact: bool) -> f64 {
    if known == 0 {
        return 0.0;
    }
    let r = if plane == 0 && exact { 0.0 } else { 0.5 };
    let unit = (1u64 << plane) as f64;
    let mag = ((known << plane) as f64 + r * unit) * step;
    if neg {
        -mag
    } else {
        mag
    }
}

/// JPEG-LS style adaptive Rice parameter.
struct Rice {
    a: u64,
    n: u64,
}

impl Rice {
    fn new(k0: u32) -> Self {
        Rice { a: 1 << k0, n: 1 }
    }

    fn k(&self) -> u32 {
        let mut k = 0;
        while (self.n << k) < self.a {
            k += 1;
        }
        k
    }

    fn update(&mut self, run: u64) {
        self.a += run;
        self.n += 1;
        if self.n >= RICE_RESET {
            self.a = self.a.div_ceil(2);
            self.n /= 2;
        }
    }

    fn put(&mut self, w: &mut BitWriter, run: u64) {
        let k = self.k();
        let u = run >> k;
        if u < ESCAPE {
            w.put((1u64 << u) - 1, u as u32);
            w.put_bit(false);
            w.put(run & ((1u64 << k) - 1), k);
        } else {
            w.put((1u64 << ESCAPE) - 1, ESCAPE as u32);
            w.put(run, RAW_RUN_BITS);
        }
        self.update(run);
    }

    fn get(&mut self, r: &mut BitReader) -> Result<u64> {
        let k = self.k();
        let mut u = 0;
        while u < ESCAPE && r.bit()? {
            u += 1;
        }
        let run = if u == ESCAPE {
            r.bits(RAW_RUN_BITS)?
        } else {
            (u << k) | r.bits(k)?
        };
        self.update(run);
        Ok(run)
    }
}

fn initial_k(insignificant: usize, fresh: usize) -> u32 {
    let mean = (insignificant / (fresh + 1)).max(1);
    mean.ilog2().min((1 << K0_BITS) - 1)
}

/// A coefficient update: slot, index within slot, new reconstruction.
pub(crate) type Update = (usize, usize, f64);

/// Called after every symbol with the bit length so far and the updates
/// the symbol carries (empty for pure side information).
pub(crate) trait Observer {
    fn symbol(&mut self, bit_len: u64, updates: &[Update]);
    fn plane_done(&mut self, _bit_len: u64) {}
}

pub(crate) fn plane_count(slots: &[Slot]) -> u32 {
    let max = slots
        .iter()
        .flat_map(|s| s.mags.iter())
        .copied()
        .max()
        .unwrap_or(0);
    64 - max.leading_zeros()
}

pub(crate) fn encode(slots: &[Slot], obs: &mut impl Observer) -> Result<Vec<u8>> {
    let planes = plane_count(slots);
    if planes > MAX_PLANES {
        return Err(Error::Parameter(
            "quantized magnitudes exceed 62 bits; base step too small".into(),
        ));
    }
    if slots
        .iter()
        .any(|s| s.mags.len() as u64 >= 1 << RAW_RUN_BITS)
    {
        return Err(Error::Parameter("subband too large".into()));
    }
    let mut w = BitWriter::new();
    w.put(u64::from(planes), PLANE_BITS);
    obs.symbol(w.bit_len(), &[]);

    let mut insig: Vec<Vec<usize>> = slots.iter().map(|s| (0..s.mags.len()).collect()).collect();
    let mut sig: Vec<Vec<usize>> = vec![Vec::new(); slots.len()];
    for p in (0..planes).rev() {
        let mut fresh: Vec<Vec<usize>> = vec![Vec::new(); slots.len()];
        for (si, slot) in slots.iter().enumerate() {
            let list = std::mem::take(&mut insig[si]);
            if list.is_empty() {
                continue;
            }
            let n_new = list.iter().filter(|&&i| slot.mags[i] >> p == 1).count();
            w.put_bit(n_new > 0);
            if n_new == 0 {
                obs.symbol(w.bit_len(), &[]);
                insig[si] = list;
                continue;
            }
            let k0 = initial_k(list.len(), n_new);
            w.put(u64::from(k0), K0_BITS);
            obs.symbol(w.bit_len(), &[]);
            let mut rice = Rice::new(k0);
            let mut keep = Vec::with_capacity(list.len() - n_new);
            let mut run = 0u64;
            for &i in &list {
                if slot.mags[i] >> p == 1 {
                    rice.put(&mut w, run);
                    w.put_bit(slot.neg[i]);
                    let v = dequantize(1, p, slot.neg[i], slot.step, slot.exact);
                    obs.symbol(w.bit_len(), &[(si, i, v)]);
                    fresh[si].push(i);
                    run = 0;
                } else {
                    keep.push(i);
                    run += 1;
                }
            }
            if run > 0 {
                rice.put(&mut w, run);
                obs.symbol(w.bit_len(), &[]);
            }
            insig[si] = keep;
        }
        for (si, slot) in slots.iter().enumerate() {
            for &i in &sig[si] {
                let known = slot.mags[i] >> p;
                w.put_bit(known & 1 == 1);
                let v = dequantize(known, p, slot.neg[i], slot.step, slot.exact);
                obs.symbol(w.bit_len(), &[(si, i, v)]);
            }
        }
        for (s, f) in sig.iter_mut().zip(fresh) {
            s.extend(f);
        }
        obs.plane_done(w.bit_len());
    }
    Ok(w.finish())
}

/// Decodes every symbol that lies entirely within `payload[..limit]`.
/// `slots` supplies sizes, steps and reconstruction rules; their magnitude
/// fields are ignored.
pub(crate) fn decode(payload: &[u8], limit: usize, slots: &[Slot]) -> Result<Vec<Vec<f64>>> {
    let mut values: Vec<Vec<f64>> = slots.iter().map(|s| vec![0.0; s.mags.len()]).collect();
    let mut r = BitReader::new(payload);
    r.set_byte_limit(limit);
    match decode_into(&mut r, slots, &mut values) {
        Ok(()) => {
            if limit == payload.len() && r.byte_pos() != payload.len() {
                return Err(Error::decode(
                    r.byte_pos(),
                    format!("{} trailing payload bytes", payload.len() - r.byte_pos()),
                ));
            }
            Ok(values)
        }
        Err(e) if BitReader::is_eof(&e) => Ok(values),
        Err(e) => Err(e),
    }
}

fn decode_into(r: &mut BitReader, slots: &[Slot], values: &mut [Vec<f64>]) -> Result<()> {
    let planes = r.bits(PLANE_BITS)? as u32;
    if planes > MAX_PLANES {
        return Err(Error::decode(
            0,
            format!("{planes} bit planes exceeds {MAX_PLANES}"),
        ));
    }
    let mut known: Vec<Vec<u64>> = slots.iter().map(|s| vec![0; s.mags.len()]).collect();
    let mut neg: Vec<Vec<bool>> = slots.iter().map(|s| vec![false; s.mags.len()]).collect();
    let mut insig: Vec<Vec<usize>> = slots.iter().map(|s| (0..s.mags.len()).collect()).collect();
    let mut sig: Vec<Vec<usize>> = vec![Vec::new(); slots.len()];
    for p in (0..planes).rev() {
        let mut fresh: Vec<Vec<usize>> = vec![Vec::new(); slots.len()];
        for (si, slot) in slots.iter().enumerate() {
            if insig[si].is_empty() {
                continue;
            }
            if !r.bit()? {
                continue;
            }
            let list = &insig[si];
            let k0 = r.bits(K0_BITS)? as u32;
            let mut rice = Rice::new(k0);
            let mut keep = Vec::with_capacity(list.len());
            let mut pos = 0usize;
            // Symbols are applied only once fully read, so an end of
            // payload leaves the state at the last complete symbol.
            while pos < list.len() {
                let remaining = (list.len() - pos) as u64;
                let at = r.bit_pos();
                let run = rice.get(r)?;
                if run == remaining {
                    keep.extend_from_slice(&list[pos..]);
                    break;
                }
                if run > remaining {
                    return Err(Error::decode(
                        (at / 8) as usize,
                        format!("run {run} exceeds {remaining} remaining coefficients"),
                    ));
                }
                let negative = r.bit()?;
                let run = run as usize;
                keep.extend_from_slice(&list[pos..pos + run]);
                let i = list[pos + run];
                known[si][i] = 1;
                neg[si][i] = negative;
                values[si][i] = dequantize(1, p, negative, slot.step, slot.exact);
                fresh[si].push(i);
                pos += run + 1;
            }
            insig[si] = keep;
        }
        for (si, slot) in slots.iter().enumerate() {
            for &i in &sig[si] {
                let bit = r.bit()?;
                let k = (known[si][i] << 1) | u64::from(bit);
                known[si][i] = k;
                values[si][i] = dequantize(k, p, neg[si][i], slot.step, slot.exact);
            }
        }
        for (s, f) in sig.iter_mut().zip(fresh) {
            s.extend(f);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Nop;
    impl Observer for Nop {
        fn symbol(&mut self, _: u64, _: &[Update]) {}
    }

    fn random_slots(rng: &mut ChaCha8Rng) -> Vec<Slot> {
        (0..rng.random_range(1..6))
            .map(|_| {
                let n = rng.random_range(0..300);
                let scale = rng.random_range(0..20u32);
                Slot {
                    mags: (0..n)
                        .map(|_| {
                            if rng.random_bool(0.6) {
                                0
                            } else {
                                rng.random_range(0..=(1u64 << scale))
                            }
                        })
                        .collect(),
                    neg: (0..n).map(|_| rng.random_bool(0.5)).collect(),
                    step: rng.random_range(0.01..4.0),
                    exact: false,
                }
            })
            .collect()
    }

    fn full(slot: &Slot) -> Vec<f64> {
        slot.mags
            .iter()
            .zip(&slot.neg)
            .map(|(&m, &n)| dequantize(m, 0, n, slot.step, slot.exact))
            .collect()
    }

    #[test]
    fn dequantize_midpoints() {
        assert_eq!(dequantize(0, 3, true, 1.0, false), 0.0);
        assert_eq!(dequantize(5, 0, false, 2.0, false), 11.0);
        assert_eq!(dequantize(5, 0, true, 1.0, true), -5.0);
        // known prefix 0b10 at plane 2: bin [8, 12), midpoint 10
        assert_eq!(dequantize(2, 2, false, 1.0, false), 10.0);
    }

    #[test]
    fn rice_round_trip_with_escape() {
        let runs = [0u64, 1, 5, 1000, 3, 0, 1 << 35, 7, 64];
        let mut w = BitWriter::new();
        let mut enc = Rice::new(2);
        for &x in &runs {
            enc.put(&mut w, x);
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        let mut dec = Rice::new(2);
        for &x in &runs {
            assert_eq!(dec.get(&mut r).unwrap(), x);
        }
    }

    #[test]
    fn full_decode_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let slots = random_slots(&mut rng);
            let payload = encode(&slots, &mut Nop).unwrap();
            let d = decode(&payload, payload.len(), &slots).unwrap();
            for (v, s) in d.iter().zip(&slots) {
                assert_eq!(v, &full(s));
            }
        }
    }

    #[test]
    fn all_zero_slots_cost_one_byte() {
        let slots = vec![Slot {
            mags: vec![0; 100],
            neg: vec![false; 100],
            step: 1.0,
            exact: false,
        }];
        let payload = encode(&slots, &mut Nop).unwrap();
        assert_eq!(payload.len(), 1);
        let d = decode(&payload, 1, &slots).unwrap();
        assert!(d[0].iter().all(|&v| v == 0.0));
    }

    /// Replays the observer stream to the state at each byte boundary and
    /// compares it with a truncated decode.
    #[test]
    fn prefixes_decode_to_complete_symbols() {
        struct Log(Vec<(u64, Vec<Update>)>);
        impl Observer for Log {
            fn symbol(&mut self, bits: u64, u: &[Update]) {
                self.0.push((bits, u.to_vec()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let slots = random_slots(&mut rng);
            let mut log = Log(Vec::new());
            let payload = encode(&slots, &mut log).unwrap();
            for limit in 0..=payload.len() {
                let mut expect: Vec<Vec<f64>> =
                    slots.iter().map(|s| vec![0.0; s.mags.len()]).collect();
                for (bits, ups) in &log.0 {
                    if *bits > 8 * limit as u64 {
                        break;
                    }
                    for &(s, i, v) in ups {
                        expect[s][i] = v;
                    }
                }
                let d = decode(&payload, limit, &slots).unwrap();
                assert_eq!(d, expect, "limit {limit}");
            }
        }
    }

    #[test]
    fn corrupt_runs_are_reported() {
        let slots = vec![Slot {
            mags: vec![0, 0, 3, 0],
            neg: vec![false; 4],
            step: 1.0,
            exact: false,
        }];
        let mut w = BitWriter::new();
        w.put(2, PLANE_BITS);
        w.put_bit(true);
        w.put(0, K0_BITS);
        // unary 9 with k = 0: longer than the four coefficients
        w.put(0b11_1111_1110, 10);
        let bytes = w.finish();
        let err = decode(&bytes, bytes.len(), &slots).err().unwrap();
        assert!(matches!(err, Error::Decode { .. }), "{err:?}");
        assert!(!BitReader::is_eof(&err));
    }
}
