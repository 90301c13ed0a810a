//! BIAWGN transmission `y = s b + omega` and PSD bookkeeping.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensembles::{parse_field, SignatureMatrix};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// One transmitted block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    pub bits: Vec<i8>,
    pub noise: Vec<f64>,
    pub received: Vec<f64>,
    pub sigma0_sq: f64,
}

/// Sends `bits` through the channel defined by `s`; `sigma0_sq = 0` is noiseless.
pub fn transmit(s: &SignatureMatrix, bits: &[i8], sigma0_sq: f64, seed: u64) -> Result<ChannelInstance> {
    if bits.len() != s.users {
        return Err(Error::Dimension {
            what: "bits",
            expected: s.users,
            got: bits.len(),
        });
    }
    if !(sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
        return Err(Error::NonPositiveVariance(sigma0_sq));
    }
    let sigma0 = sigma0_sq.sqrt();
    let mut noise_rng = rng::stream(seed, tag::NOISE);
    let noise: Vec<f64> = (0..s.chips)
        .map(|_| sigma0 * noise_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut received = s.apply(bits);
    for (y, w) in received.iter_mut().zip(&noise) {
        *y += w;
    }
    Ok(ChannelInstance {
        bits: bits.to_vec(),
        noise,
        received,
        sigma0_sq,
    })
}

/// Uniform random `±1` bits.
pub fn random_bits(users: usize, seed: u64) -> Vec<i8> {
    let mut r = rng::stream(seed, tag::BITS);
    (0..users).map(|_| if r.random::<bool>() { 1 } else { -1 }).collect()
}

/// `PSD = 1 / (2 sigma0^2)` in dB.
pub fn psd_db(sigma0_sq: f64) -> Result<f64> {
    if !(sigma0_sq > 0.0) {
        return Err(Error::NonPositiveVariance(sigma0_sq));
    }
    Ok(10.0 * (1.0 / (2.0 * sigma0_sq)).log10())
}

/// Inverse of [`psd_db`].
pub fn sigma0_sq_from_psd_db(psd_db: f64) -> f64 {
    1.0 / (2.0 * 10f64.powf(psd_db / 10.0))
}

impl ChannelInstance {
    /// Header `N K sigma0_sq`, then `y` one per line. With `fixture`, a
    /// `# bits` section (K lines) and a `# noise` section (N lines) follow.
    pub fn to_text(&self, fixture: bool) -> String {
        let mut out = format!("{} {} {:.16e}\n", self.received.len(), self.bits.len(), self.sigma0_sq);
        for y in &self.received {
            out.push_str(&format!("{y:.16e}\n"));
        }
        if fixture {
            out.push_str("# bits\n");
            for b in &self.bits {
                out.push_str(&format!("{b}\n"));
            }
            out.push_str("# noise\n");
            for w in &self.noise {
                out.push_str(&format!("{w:.16e}\n"));
            }
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. Without fixture sections the
    /// bits and noise are returned empty.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::parse("instance header", "empty input"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(Error::parse("instance header", format!("{header:?}")));
        }
        let n: usize = parse_field(h[0], "N")?;
        let k: usize = parse_field(h[1], "K")?;
        let sigma0_sq: f64 = parse_field(h[2], "sigma0_sq")?;
        let mut received = Vec::with_capacity(n);
        for _ in 0..n {
            let l = lines.next().ok_or_else(|| Error::parse("instance", "missing y values"))?;
            received.push(parse_field(l, "y")?);
        }
        let mut bits = Vec::new();
        let mut noise = Vec::new();
        while let Some(l) = lines.next() {
            match l {
                "# bits" => {
                    for _ in 0..k {
                        let v = lines.next().ok_or_else(|| Error::parse("instance", "missing bits"))?;
                        bits.push(parse_field(v, "bit")?);
                    }
                }
                "# noise" => {
                    for _ in 0..n {
                        let v = lines.next().ok_or_else(|| Error::parse("instance", "missing noise"))?;
                        noise.push(parse_field(v, "noise")?);
                    }
                }
                other => return Err(Error::parse("instance", format!("unexpected line {other:?}"))),
            }
        }
        Ok(ChannelInstance {
            bits,
            noise,
            received,
            sigma0_sq,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_signature, EnsembleKind, EnsembleSpec, Entry};

    #[test]
    fn noiseless_single_user() {
        let s = SignatureMatrix::from_entries(
            1,
            1,
            EnsembleKind::Regular,
            1.0,
            1.0,
            vec![Entry { chip: 0, user: 0, gain: 0.7 }],
        )
        .unwrap();
        let inst = transmit(&s, &[1], 0.0, 3).unwrap();
        assert_eq!(inst.received, vec![0.7]);
    }

    #[test]
    fn noiseless_all_ones_sums_gains() {
        let spec = EnsembleSpec::regular(3, 3, 12).unwrap();
        let s = sample_signature(&spec, 4).unwrap();
        let inst = transmit(&s, &vec![1; 12], 0.0, 0).unwrap();
        let mut expect = vec![0.0; 12];
        for e in &s.entries {
            expect[e.chip] += e.gain;
        }
        assert_eq!(inst.received, expect);
    }

    #[test]
    fn noise_variance() {
        let s = SignatureMatrix::from_entries(100_000, 1, EnsembleKind::Irregular, 1.0, 1e-5, vec![]).unwrap();
        let inst = transmit(&s, &[1], 0.25, 9).unwrap();
        let n = inst.noise.len() as f64;
        let mean = inst.noise.iter().sum::<f64>() / n;
        let var = inst.noise.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.25).abs() < 0.005, "variance {var}");
    }

    #[test]
    fn linearity_in_bits() {
        let spec = EnsembleSpec::regular(3, 3, 30).unwrap();
        let s = sample_signature(&spec, 1).unwrap();
        let b = random_bits(30, 2);
        let neg: Vec<i8> = b.iter().map(|x| -x).collect();
        let a = transmit(&s, &b, 0.3, 5).unwrap();
        let c = transmit(&s, &neg, 0.3, 5).unwrap();
        for ((ya, yc), w) in a.received.iter().zip(&c.received).zip(&a.noise) {
            assert!((yc - (-ya + 2.0 * w)).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let spec = EnsembleSpec::regular(3, 3, 6).unwrap();
        let s = sample_signature(&spec, 1).unwrap();
        assert!(matches!(transmit(&s, &[1; 5], 0.1, 0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn psd_conversions() {
        assert!(psd_db(0.5).unwrap().abs() < 1e-15);
        assert!((psd_db(0.05).unwrap() - 10.0).abs() < 1e-12);
        let s = sigma0_sq_from_psd_db(10.23);
        assert!((s - 1.0 / (2.0 * 10f64.powf(1.023))).abs() < 1e-15);
        assert!((s - 0.047421).abs() < 1e-6);
        for db in [-10.0, 0.0, 3.3, 12.0] {
            assert!((psd_db(sigma0_sq_from_psd_db(db)).unwrap() - db).abs() < 1e-12);
        }
        assert!(psd_db(0.0).is_err());
        assert!(psd_db(-1.0).is_err());
    }

    #[test]
    fn instance_text_round_trip() {
        let spec = EnsembleSpec::regular(3, 3, 9).unwrap();
        let s = sample_signature(&spec, 1).unwrap();
        let inst = transmit(&s, &random_bits(9, 1), 0.2, 3).unwrap();
        assert_eq!(ChannelInstance::from_text(&inst.to_text(true)).unwrap(), inst);
        let bare = ChannelInstance::from_text(&inst.to_text(false)).unwrap();
        assert_eq!(bare.received, inst.received);
        assert!(bare.bits.is_empty());
    }
}
