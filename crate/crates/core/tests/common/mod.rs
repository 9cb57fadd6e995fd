//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use lawave_core::morphology::{erode_binary, open_binary, StructuringElement};
use lawave_core::neural::{dice_loss_batch, Mode, Network, NetworkSpec, Tensor, TrainingSet};
use lawave_core::{BinaryImage, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `D ⊕ S` as the union of translates `D_s`, each clipped to the grid.
pub fn dilate_oracle(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    let mut out = BinaryImage::new(d.rows(), d.cols());
    for (sr, sc) in s.offsets() {
        for r in 0..d.rows() {
            for c in 0..d.cols() {
                if d[(r, c)] {
                    let (tr, tc) = (r as isize + sr, c as isize + sc);
                    if tr >= 0 && tc >= 0 && (tr as usize) < d.rows() && (tc as usize) < d.cols() {
                        out[(tr as usize, tc as usize)] = true;
                    }
                }
            }
        }
    }
    out
}

/// `D ⊖ S` as the intersection of translates `D_{-s}` in the zero plane.
pub fn erode_oracle(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    let mut out = Grid::from_fn(d.rows(), d.cols(), |_, _| true);
    for (sr, sc) in s.offsets() {
        let translate = Grid::from_fn(d.rows(), d.cols(), |r, c| {
            d.get(r as isize + sr, c as isize + sc).copied().unwrap_or(false)
        });
        out = out.and(&translate).unwrap();
    }
    out
}

/// Union of all translates `S_z` lying entirely inside `D`.
pub fn open_oracle(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    let offsets = s.offsets();
    let mut out = BinaryImage::new(d.rows(), d.cols());
    let (rows, cols) = (d.rows() as isize, d.cols() as isize);
    for zr in -rows..2 * rows {
        for zc in -cols..2 * cols {
            let fits = offsets
                .iter()
                .all(|&(sr, sc)| d.get(zr + sr, zc + sc).copied().unwrap_or(false));
            if fits {
                for &(sr, sc) in &offsets {
                    out[((zr + sr) as usize, (zc + sc) as usize)] = true;
                }
            }
        }
    }
    out
}

/// Term-by-term Lantuéjoul evaluation: `D ⊖ kS` by k-fold erosion written
/// out from the oracles, then `∪_k (D ⊖ kS) − (D ⊖ kS) ∘ S`.
pub fn skeleton_oracle(d: &BinaryImage) -> BinaryImage {
    let s = StructuringElement::cross();
    let mut terms = vec![d.clone()];
    loop {
        let next = erode_oracle(terms.last().unwrap(), &s);
        if !next.any() {
            break;
        }
        terms.push(next);
    }
    let mut out = BinaryImage::new(d.rows(), d.cols());
    for t in &terms {
        let opened = open_oracle(t, &s);
        out = Grid::from_fn(d.rows(), d.cols(), |r, c| out[(r, c)] || (t[(r, c)] && !opened[(r, c)]));
    }
    out
}

pub fn random_mask(rng: &mut impl Rng, side: usize, density: f64) -> BinaryImage {
    Grid::from_fn(side, side, |_, _| rng.gen_bool(density))
}

/// Random element inside a 5x5 box, anchored at the box centre, which is
/// always one of its cells.
pub fn random_element(rng: &mut impl Rng) -> StructuringElement {
    let mut offsets = vec![(0, 0)];
    for r in -2..=2 {
        for c in -2..=2 {
            if (r, c) != (0, 0) && rng.gen_bool(0.4) {
                offsets.push((r, c));
            }
        }
    }
    StructuringElement::from_offsets(&offsets).unwrap()
}

/// Filled, tilted ellipse blob centred in a `side`-sized grid.
pub fn ellipse_blob(rng: &mut impl Rng, side: usize) -> BinaryImage {
    let c = side as f64 / 2.0 - 0.5;
    let (cy, cx) = (c + rng.gen_range(-3.0..3.0), c + rng.gen_range(-3.0..3.0));
    let a = rng.gen_range(3.0..side as f64 / 3.0);
    let b = rng.gen_range(2.0..a);
    let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    Grid::from_fn(side, side, |r, col| {
        let (y, x) = (r as f64 - cy, col as f64 - cx);
        let u = x * t.cos() + y * t.sin();
        let v = -x * t.sin() + y * t.cos();
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    })
}

/// Opening of a random mask is used directly by the skeleton tests.
pub fn opened(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    open_binary(d, s)
}

pub fn eroded(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    erode_binary(d, s)
}

/// Axis-aligned filled rectangle at a random position.
pub fn rectangle_blob(rng: &mut impl Rng, side: usize) -> BinaryImage {
    let h = rng.gen_range(1..side / 2);
    let w = rng.gen_range(1..side / 2);
    let r0 = rng.gen_range(1..side - h - 1);
    let c0 = rng.gen_range(1..side - w - 1);
    Grid::from_fn(side, side, |r, c| {
        (r0..r0 + h).contains(&r) && (c0..c0 + w).contains(&c)
    })
}

/// Self-avoiding-ish 8-connected random walk, optionally thickened.
pub fn walk_blob(rng: &mut impl Rng, side: usize, thicken: bool) -> BinaryImage {
    let mut d = BinaryImage::square(side);
    let (mut r, mut c) = (side as isize / 2, side as isize / 2);
    let mut heading = rng.gen_range(0..8);
    for _ in 0..rng.gen_range(8..3 * side) {
        d[(r as usize, c as usize)] = true;
        heading = (heading + rng.gen_range(7..10)) % 8;
        let (dr, dc) = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)][heading];
        let margin = if thicken { 2 } else { 1 };
        if r + dr < margin || c + dc < margin || r + dr >= side as isize - margin || c + dc >= side as isize - margin {
            continue;
        }
        r += dr;
        c += dc;
    }
    if thicken {
        lawave_core::morphology::dilate_binary(&d, &StructuringElement::square(3))
    } else {
        d
    }
}

/// Centres `(row, col)` of mask pixels with a 4-neighbour outside the mask.
pub fn boundary_pixels(m: &BinaryImage) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if !m[(r, c)] {
                continue;
            }
            let edge = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|(dr, dc)| !m.get(r as isize + dr, c as isize + dc).copied().unwrap_or(false));
            if edge {
                out.push((r as f64, c as f64));
            }
        }
    }
    out
}

/// Normal direction (degrees, `[0, 180)`, x right / y up) at the boundary
/// point nearest to `(x, y)`, found by dense parametric sampling; also
/// returns that distance in unit coordinates.
pub fn nearest_boundary_normal(s: &lawave_core::phantom::EllipseSpec, x: f64, y: f64) -> (f64, f64) {
    let (sn, cs) = s.tilt.sin_cos();
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..2880 {
        let t = k as f64 / 2880.0 * std::f64::consts::TAU;
        let (u, v) = (s.semi_axes.0 * t.cos(), s.semi_axes.1 * t.sin());
        let (bx, by) = (s.center.0 + u * cs - v * sn, s.center.1 + u * sn + v * cs);
        let d = (bx - x).hypot(by - y);
        if d < best.0 {
            best = (d, s.normal_angle(bx, by));
        }
    }
    best
}

/// Count of mask pixels in `stack` and how many of them sit nearest to a
/// boundary point whose normal lies in `wedge = (centre, half_width)`.
pub fn wedge_counts(
    stack: &lawave_core::SubbandStack,
    spec: &lawave_core::phantom::EllipseSpec,
    image_size: usize,
    wedge: (f64, f64),
) -> (usize, usize) {
    let (mut total, mut inside) = (0, 0);
    for plane in stack.planes() {
        for r in 0..plane.rows() {
            for c in 0..plane.cols() {
                if plane[(r, c)] < 0.5 {
                    continue;
                }
                let (x, y) = lawave_core::pipeline::coeff_center(r, c, image_size);
                let (_, normal) = nearest_boundary_normal(spec, x, y);
                total += 1;
                if lawave_core::geometry::orientation_distance(normal, wedge.0) <= wedge.1 {
                    inside += 1;
                }
            }
        }
    }
    (total, inside)
}

pub fn tiny_spec(widths: Vec<usize>, use_batchnorm: bool) -> NetworkSpec {
    NetworkSpec {
        in_channels: 6,
        out_channels: 6,
        widths,
        use_batchnorm,
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, side: usize) -> (Tensor<f64>, Tensor<f64>) {
    let len = n * 6 * side * side;
    let x = Tensor::from_vec([n, 6, side, side], (0..len).map(|_| rng.gen::<f64>() - 0.3).collect()).unwrap();
    let y = Tensor::from_vec(
        [n, 6, side, side],
        (0..len)
            .map(|_| if rng.gen::<f64>() < 0.3 { 1.0 } else { 0.0 })
            .collect(),
    )
    .unwrap();
    (x, y)
}

pub fn loss(net: &Network<f64>, x: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    let out = net.forward(x, Mode::Train).unwrap();
    dice_loss_batch(&out, y).unwrap().0
}

/// Max relative error between backprop and central differences over every
/// trainable parameter.
///
/// The networks are piecewise smooth (ReLU, max-pool), so a step can cross a
/// switch point and bias the difference quotient. Each parameter is
/// therefore checked with steps 1e-5, 1e-6 and 1e-7, and the best one
/// counts: a switch point rarely lies within all of them, while a wrong
/// gradient disagrees at every step.
///
/// Hidden biases start at zero, so wherever a unit's inputs are all zero
/// its pre-activation sits exactly on the ReLU switch and no step size
/// helps. The biases are first moved to a generic point by a small seeded
/// offset.
pub fn max_gradient_error(net: &mut Network<f64>, x: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b1a5);
    for p in net
        .params_mut()
        .iter_mut()
        .filter(|p| p.trainable && p.name.ends_with(".bias"))
    {
        for v in p.data.iter_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    let tape = net.forward_taped(x, Mode::Train).unwrap();
    let (_, dout) = dice_loss_batch(tape.output(), y).unwrap();
    let grads = net.backward(&tape, &dout).unwrap();
    let mut worst = 0.0f64;
    for pi in 0..net.params().len() {
        if !net.params()[pi].trainable {
            continue;
        }
        for k in 0..net.params()[pi].data.len() {
            let orig = net.params()[pi].data[k];
            let analytic = grads.values[pi][k];
            let mut best = f64::INFINITY;
            for h in [1e-5, 1e-6, 1e-7] {
                net.params_mut()[pi].data[k] = orig + h;
                let up = loss(net, x, y);
                net.params_mut()[pi].data[k] = orig - h;
                let down = loss(net, x, y);
                net.params_mut()[pi].data[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let scale = analytic.abs().max(numeric.abs()).max(1e-6);
                best = best.min((analytic - numeric).abs() / scale);
            }
            worst = worst.max(best);
        }
    }
    worst
}

/// Noisy bands in the two visible subbands, as N1 sees them.
pub fn single_sample(seed: u64, side: usize) -> TrainingSet<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = side as f64 / 2.0;
    let mut input = vec![0.0f32; 6 * side * side];
    let mut truth = vec![0.0f32; 6 * side * side];
    for ch in [2usize, 3] {
        for r in 0..side {
            for q in 0..side {
                let d = ((r as f64 - c) * 0.9 + (q as f64 - c) * 0.4).abs();
                let idx = ch * side * side + r * side + q;
                if d < 3.0 {
                    input[idx] = (1.0 - d / 3.0) as f32 + 0.1 * rng.gen::<f32>();
                }
                if d < 1.5 {
                    truth[idx] = 1.0;
                }
            }
        }
    }
    TrainingSet {
        channels: 6,
        side,
        inputs: vec![input],
        truths: vec![truth],
    }
}

/// Dilated bands in all six subbands with thinner targets, as N2 sees them.
pub fn six_band_sample(side: usize) -> TrainingSet<f32> {
    let c = side as f64 / 2.0;
    let mut input = vec![0.0f32; 6 * side * side];
    let mut truth = vec![0.0f32; 6 * side * side];
    for ch in 0..6 {
        let a = (ch as f64 * 30.0 + 15.0).to_radians();
        for r in 0..side {
            for q in 0..side {
                let d = ((r as f64 - c) * a.sin() + (q as f64 - c) * a.cos()).abs();
                let idx = ch * side * side + r * side + q;
                if d < 3.0 {
                    input[idx] = 1.0;
                }
                if d < 1.5 {
                    truth[idx] = 1.0;
                }
            }
        }
    }
    TrainingSet {
        channels: 6,
        side,
        inputs: vec![input],
        truths: vec![truth],
    }
}
