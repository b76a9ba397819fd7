use crate::error::{validation, Result};
use crate::qcore::C64;

/// Interferometer weights indexed by the bits ε1ε2ε3ε4 (ε = 1 selects the
/// delayed arm at that time argument).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub weights: [C64; 16],
}

impl WeightTable {
    /// Weight of the index written as a bit string, e.g. `"1010"`.
    pub fn get(&self, bits: &str) -> Result<C64> {
        if bits.len() != 4 || !bits.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(validation(format!("weight index must be four bits, got {bits:?}")));
        }
        Ok(self.weights[usize::from_str_radix(bits, 2).expect("checked bits")])
    }

    pub fn nonzero(&self, tol: f64) -> Vec<usize> {
        (0..16).filter(|&k| self.weights[k].norm() > tol).collect()
    }
}

/// Table I weights for splitter amplitudes `(ta, ra)` and `(tb, rb)` and
/// polarization angle φ between the arms.
pub fn hom_weights(ta: C64, tb: C64, ra: C64, rb: C64, phi: f64) -> Result<WeightTable> {
    for (name, t, r) in [("A", ta, ra), ("B", tb, rb)] {
        let n = t.norm_sqr() + r.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(validation(format!("splitter {name} is not lossless: |t|²+|r|² = {n}")));
        }
    }
    let c = C64::new(phi.cos(), 0.0);
    let c2 = c * c;
    let (ta2, tb2, ra2, rb2) = (ta.norm_sqr(), tb.norm_sqr(), ra.norm_sqr(), rb.norm_sqr());
    let re = |x: f64| C64::new(x, 0.0);
    let (tac, tbc, rac, rbc) = (ta.conj(), tb.conj(), ra.conj(), rb.conj());
    let w = [
        /* 0000 */ re(ta2 * ta2 * tb2 * rb2),
        /* 0001 */ -re(ta2 * rb2) * ta * tb * rac * rbc * c,
        /* 0010 */ re(ta2 * tb2) * tac * tb * ra * rbc * c,
        /* 0011 */ -re(tb2 * rb2) * tac * tac * ra * ra * c2,
        /* 0100 */ re(ta2 * tb2) * ta * tbc * rac * rb * c,
        /* 0101 */ -re(ta2 * ra2) * tbc * tbc * rb * rb * c2,
        /* 0110 */ re(ta2 * tb2 * tb2 * ra2),
        /* 0111 */ -re(tb2 * ra2) * tac * tbc * ra * rb * c,
        /* 1000 */ -re(ta2 * rb2) * tac * tbc * ra * rb * c,
        /* 1001 */ re(ta2 * ra2 * rb2 * rb2),
        /* 1010 */ -re(ta2 * ra2) * tb * tb * rbc * rbc * c2,
        /* 1011 */ re(ra2 * rb2) * tac * tb * ra * rbc * c,
        /* 1100 */ -re(tb2 * rb2) * ta * ta * rac * rac * c2,
        /* 1101 */ re(ra2 * rb2) * ta * tbc * rac * rb * c,
        /* 1110 */ -re(tb2 * ra2) * ta * tb * rac * rbc * c,
        /* 1111 */ re(tb2 * ra2 * ra2 * rb2),
    ];
    Ok(WeightTable { weights: w })
}

/// Laser-phase envelope of each response term after averaging over the
/// blurring: intensity terms are untouched, one-photon interference terms
/// decay with the arm delay, the two-photon term with τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    None,
    ArmDelay,
    /// e^{−Γ_L(|Δt|+|τ|)} for |τ| < |Δt|, e^{−2Γ_L|Δt|} beyond.
    Piecewise,
    TwoPhoton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseTerm {
    pub number: u8,
    /// Bits of the tabulated time ordering.
    pub index: usize,
    /// Complex-conjugate partner, if the term comes with one.
    pub partner: Option<usize>,
    pub envelope: Envelope,
}

pub const RESPONSE_TERMS: [ResponseTerm; 9] = [
    ResponseTerm { number: 1, index: 0b0000, partner: None, envelope: Envelope::None },
    ResponseTerm { number: 2, index: 0b0110, partner: None, envelope: Envelope::None },
    ResponseTerm { number: 3, index: 0b1001, partner: None, envelope: Envelope::None },
    ResponseTerm { number: 4, index: 0b0010, partner: Some(0b0100), envelope: Envelope::ArmDelay },
    ResponseTerm { number: 5, index: 0b1101, partner: Some(0b1011), envelope: Envelope::ArmDelay },
    ResponseTerm { number: 6, index: 0b0001, partner: Some(0b1000), envelope: Envelope::ArmDelay },
    ResponseTerm { number: 7, index: 0b0011, partner: Some(0b1100), envelope: Envelope::Piecewise },
    ResponseTerm { number: 8, index: 0b0101, partner: Some(0b1010), envelope: Envelope::TwoPhoton },
    ResponseTerm { number: 9, index: 0b0111, partner: Some(0b1110), envelope: Envelope::ArmDelay },
];

/// Index 1111 is term 1 shifted by −Δt, so it joins term 1.
pub const TERM1_SHIFTED: usize = 0b1111;

impl ResponseTerm {
    /// Prefactor of the term: its own weight, plus the shifted copy for term 1.
    pub fn factor(&self, table: &WeightTable) -> C64 {
        let w = table.weights[self.index];
        if self.number == 1 {
            w + table.weights[TERM1_SHIFTED]
        } else {
            w
        }
    }
}

/// `exp(−Γ·x)` with the convention that a zero lag is untouched even for an
/// infinitely fast blurring.
fn decay(gamma: f64, x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (-gamma * x).exp()
    }
}

pub fn envelope(kind: Envelope, tau: f64, delta_t: f64, gamma_l: f64) -> f64 {
    let (t, d) = (tau.abs(), delta_t.abs());
    match kind {
        Envelope::None => 1.0,
        Envelope::ArmDelay => decay(gamma_l, d),
        Envelope::Piecewise => {
            if t < d {
                decay(gamma_l, d + t)
            } else {
                decay(gamma_l, 2.0 * d)
            }
        }
        Envelope::TwoPhoton => decay(gamma_l, 2.0 * t),
    }
}
