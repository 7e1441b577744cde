//! Small dense polynomials in one variable (degree at most three).

/// `c[0] + c[1] x + c[2] x^2 + c[3] x^3`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cubic {
    pub c: [f64; 4],
}

impl Cubic {
    pub fn new(c0: f64, c1: f64, c2: f64, c3: f64) -> Self {
        Self {
            c: [c0, c1, c2, c3],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        ((self.c[3] * x + self.c[2]) * x + self.c[1]) * x + self.c[0]
    }

    pub fn derivative(&self) -> Cubic {
        Cubic::new(self.c[1], 2.0 * self.c[2], 3.0 * self.c[3], 0.0)
    }

    /// The polynomial `q(y) = p(y + h)`.
    pub fn shift(&self, h: f64) -> Cubic {
        let [c0, c1, c2, c3] = self.c;
        Cubic::new(
            c0 + h * (c1 + h * (c2 + h * c3)),
            c1 + h * (2.0 * c2 + 3.0 * h * c3),
            c2 + 3.0 * h * c3,
            c3,
        )
    }

    pub fn sub(&self, other: &Cubic) -> Cubic {
        Cubic::new(
            self.c[0] - other.c[0],
            self.c[1] - other.c[1],
            self.c[2] - other.c[2],
            self.c[3] - other.c[3],
        )
    }

    pub fn add_const(&self, k: f64) -> Cubic {
        let mut c = *self;
        c.c[0] += k;
        c
    }

    fn degree(&self) -> usize {
        let scale = self
            .c
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        (0..4)
            .rev()
            .find(|&i| self.c[i].abs() > 1e-14 * scale)
            .unwrap_or(0)
    }

    /// Real roots in the closed interval `[lo, hi]`, sorted and deduplicated.
    pub fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        if !(hi >= lo) {
            return Vec::new();
        }
        let mut out = match self.degree() {
            0 => Vec::new(),
            1 => vec![-self.c[0] / self.c[1]],
            2 => quadratic_roots(self.c[2], self.c[1], self.c[0]),
            _ => {
                // Split at the critical points and bisect each monotone piece.
                let mut knots = vec![lo];
                knots.extend(self.derivative().roots_in(lo, hi));
                knots.push(hi);
                let mut roots = Vec::new();
                for w in knots.windows(2) {
                    if let Some(r) = bisect_root(|x| self.eval(x), w[0], w[1]) {
                        roots.push(r);
                    }
                }
                roots
            }
        };
        out.retain(|&r| r >= lo && r <= hi);
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        out
    }

    /// Minimum of the polynomial over `[lo, hi]` and where it is attained.
    pub fn min_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut best = (self.eval(lo), lo);
        let candidates = self.derivative().roots_in(lo, hi);
        for x in candidates.into_iter().chain(std::iter::once(hi)) {
            let v = self.eval(x);
            if v < best.0 {
                best = (v, x);
            }
        }
        best
    }

    pub fn max_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let neg = Cubic::new(-self.c[0], -self.c[1], -self.c[2], -self.c[3]);
        let (v, x) = neg.min_on(lo, hi);
        (-v, x)
    }
}

/// Real roots of `a x^2 + b x + c` with the cancellation-free formula.
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { Vec::new() } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / (2.0 * a)];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (mut r1, mut r2) = (q / a, if q != 0.0 { c / q } else { 0.0 });
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    vec![r1, r2]
}

/// Root of a continuous function with a sign change (or a zero) on `[a, b]`.
pub fn bisect_root(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Option<f64> {
    let (mut lo, mut hi) = (a, b);
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Golden-section minimizer of a unimodal function on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
