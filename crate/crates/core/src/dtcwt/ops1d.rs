//! One-dimensional filtering stages of the dual-tree cascade, each held as
//! an explicit sparse matrix so that both the operator and its exact
//! transpose are available.
//!
//! Every stage uses half-sample symmetric extension (end samples repeated).

use crate::grid::Grid;

#[derive(Debug, Clone)]
pub struct Op1d {
    in_len: usize,
    /// `rows[i]` lists `(input index, weight)` pairs of output `i`.
    rows: Vec<Vec<(usize, f64)>>,
}

/// Half-sample symmetric index reflection into `0..n`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// Valid-mode convolution of the gathered sequence `x[gather[..]]` with `f`:
/// `y[i] = sum_k f[k] * x[gather[i + m - 1 - k]]`.
fn conv_valid(gather: &[usize], f: &[f64]) -> Vec<Vec<(usize, f64)>> {
    let m = f.len();
    let out_len = gather.len() + 1 - m;
    (0..out_len)
        .map(|i| (0..m).map(|k| (gather[i + m - 1 - k], f[k])).collect())
        .collect()
}

fn merge(row_a: &[(usize, f64)], row_b: &[(usize, f64)]) -> Vec<(usize, f64)> {
    row_a.iter().chain(row_b).copied().collect()
}

impl Op1d {
    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.rows.len()
    }

    /// Undecimated filtering; odd-length filters keep the length.
    pub fn filter(n: usize, h: &[f64]) -> Op1d {
        let m2 = (h.len() / 2) as isize;
        let xe: Vec<usize> = (-m2..n as isize + m2).map(|i| reflect(i, n)).collect();
        Op1d {
            in_len: n,
            rows: conv_valid(&xe, h),
        }
    }

    /// Decimate-by-two quarter-shift filtering: `ha` runs on one phase of the
    /// input and `hb` on the other, outputs interleaved. `n % 4 == 0`.
    pub fn decimate(n: usize, ha: &[f64], hb: &[f64]) -> Op1d {
        assert!(n % 4 == 0, "decimating stage needs a multiple of 4 samples");
        assert!(ha.len() == hb.len() && ha.len() % 2 == 0);
        let m = ha.len() as isize;
        let xe: Vec<usize> = (-m..n as isize + m).map(|i| reflect(i, n)).collect();
        let (hao, hae) = split_phases(ha);
        let (hbo, hbe) = split_phases(hb);
        let t: Vec<usize> = (5..(n as isize + 2 * m - 2) as usize).step_by(4).collect();
        let gather = |shift: usize| -> Vec<usize> { t.iter().map(|&ti| xe[ti - shift]).collect() };
        let ya: Vec<_> = conv_valid(&gather(1), &hao)
            .iter()
            .zip(conv_valid(&gather(3), &hae))
            .map(|(a, b)| merge(a, &b))
            .collect();
        let yb: Vec<_> = conv_valid(&gather(0), &hbo)
            .iter()
            .zip(conv_valid(&gather(2), &hbe))
            .map(|(a, b)| merge(a, &b))
            .collect();
        let a_first = dot(ha, hb) > 0.0;
        let mut rows = Vec::with_capacity(n / 2);
        for (a, b) in ya.into_iter().zip(yb) {
            if a_first {
                rows.push(a);
                rows.push(b);
            } else {
                rows.push(b);
                rows.push(a);
            }
        }
        Op1d { in_len: n, rows }
    }

    /// Interpolate-by-two quarter-shift filtering, the synthesis counterpart
    /// of [`Op1d::decimate`]. `n` even.
    pub fn interpolate(n: usize, ha: &[f64], hb: &[f64]) -> Op1d {
        assert!(n % 2 == 0, "interpolating stage needs an even length");
        assert!(ha.len() == hb.len() && ha.len() % 2 == 0);
        let m = ha.len();
        let m2 = (m / 2) as isize;
        let xe: Vec<usize> = (-m2..n as isize + m2).map(|i| reflect(i, n)).collect();
        let (hao, hae) = split_phases(ha);
        let (hbo, hbe) = split_phases(hb);
        let a_first = dot(ha, hb) > 0.0;
        let gather = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| xe[i]).collect() };
        let phases: [Vec<Vec<(usize, f64)>>; 4] = if m2 % 2 == 0 {
            let t: Vec<usize> = (3..n + m).step_by(2).collect();
            let (ta, tb) = phase_taps(&t, a_first);
            let ta2: Vec<usize> = ta.iter().map(|&v| v - 2).collect();
            let tb2: Vec<usize> = tb.iter().map(|&v| v - 2).collect();
            [
                conv_valid(&gather(&tb2), &hae),
                conv_valid(&gather(&ta2), &hbe),
                conv_valid(&gather(&tb), &hao),
                conv_valid(&gather(&ta), &hbo),
            ]
        } else {
            let t: Vec<usize> = (2..n + m - 1).step_by(2).collect();
            let (ta, tb) = phase_taps(&t, a_first);
            [
                conv_valid(&gather(&tb), &hao),
                conv_valid(&gather(&ta), &hbo),
                conv_valid(&gather(&tb), &hae),
                conv_valid(&gather(&ta), &hbe),
            ]
        };
        let quarter = n / 2;
        let mut rows = Vec::with_capacity(2 * n);
        for i in 0..quarter {
            for phase in &phases {
                rows.push(phase[i].clone());
            }
        }
        Op1d { in_len: n, rows }
    }

    /// `y = A x` on a strided vector.
    #[inline]
    fn apply_strided(&self, x: &[f64], x_stride: usize, y: &mut [f64], y_stride: usize) {
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, w) in row {
                acc += w * x[j * x_stride];
            }
            y[i * y_stride] = acc;
        }
    }

    /// `x += A^T y` on a strided vector.
    #[inline]
    fn apply_t_strided(&self, y: &[f64], y_stride: usize, x: &mut [f64], x_stride: usize) {
        for (i, row) in self.rows.iter().enumerate() {
            let yi = y[i * y_stride];
            if yi == 0.0 {
                continue;
            }
            for &(j, w) in row {
                x[j * x_stride] += w * yi;
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_len);
        let mut y = vec![0.0; self.out_len()];
        self.apply_strided(x, 1, &mut y, 1);
        y
    }

    pub fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.out_len());
        let mut x = vec![0.0; self.in_len];
        self.apply_t_strided(y, 1, &mut x, 1);
        x
    }

    /// Filter every column (along the row index).
    pub fn cols(&self, g: &Grid<f64>) -> Grid<f64> {
        assert_eq!(g.rows(), self.in_len);
        let c = g.cols();
        let mut out = vec![0.0; self.out_len() * c];
        for col in 0..c {
            self.apply_strided(&g.as_slice()[col..], c, &mut out[col..], c);
        }
        Grid::from_vec(self.out_len(), c, out).unwrap()
    }

    /// Filter every row (along the column index).
    pub fn rows(&self, g: &Grid<f64>) -> Grid<f64> {
        assert_eq!(g.cols(), self.in_len);
        let r = g.rows();
        let n_out = self.out_len();
        let mut out = vec![0.0; r * n_out];
        for row in 0..r {
            self.apply_strided(g.row(row), 1, &mut out[row * n_out..], 1);
        }
        Grid::from_vec(r, n_out, out).unwrap()
    }

    /// Accumulate the column-transpose: `acc += (A^T applied to columns of g)`.
    pub fn cols_t_into(&self, g: &Grid<f64>, acc: &mut Grid<f64>) {
        assert_eq!(g.rows(), self.out_len());
        assert_eq!(acc.rows(), self.in_len);
        let c = g.cols();
        for col in 0..c {
            self.apply_t_strided(&g.as_slice()[col..], c, &mut acc.as_mut_slice()[col..], c);
        }
    }

    /// Accumulate the row-transpose.
    pub fn rows_t_into(&self, g: &Grid<f64>, acc: &mut Grid<f64>) {
        assert_eq!(g.cols(), self.out_len());
        assert_eq!(acc.cols(), self.in_len);
        let n_in = self.in_len;
        for row in 0..g.rows() {
            let dst = &mut acc.as_mut_slice()[row * n_in..(row + 1) * n_in];
            self.apply_t_strided(g.row(row), 1, dst, 1);
        }
    }
}

fn split_phases(h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let odd = h.iter().step_by(2).copied().collect();
    let even = h.iter().skip(1).step_by(2).copied().collect();
    (odd, even)
}

fn phase_taps(t: &[usize], a_first: bool) -> (Vec<usize>, Vec<usize>) {
    let shifted: Vec<usize> = t.iter().map(|&v| v - 1).collect();
    if a_first {
        (t.to_vec(), shifted)
    } else {
        (shifted, t.to_vec())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
