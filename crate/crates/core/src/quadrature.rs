//! Gauss–Legendre rules used for error norms and as assembly oracles.

/// 4-point Gauss–Legendre nodes on `[-1, 1]`.
pub const GAUSS4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];

pub const GAUSS4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// 2-point Gauss–Legendre nodes on `[-1, 1]`.
pub const GAUSS2_NODES: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Points and weights of the 4-point rule mapped to `[a, b]`.
pub fn gauss4_on(a: f64, b: f64) -> [(f64, f64); 4] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 4];
    for (slot, (x, w)) in out
        .iter_mut()
        .zip(GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()))
    {
        *slot = (mid + half * x, half * w);
    }
    out
}

/// Points of the 2-point rule on `[a, b]`; each carries weight `(b - a) / 2`.
pub fn gauss2_on(a: f64, b: f64) -> [f64; 2] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    [mid + half * GAUSS2_NODES[0], mid + half * GAUSS2_NODES[1]]
}
