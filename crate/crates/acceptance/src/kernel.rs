//! Randomized structured systems with an exact one-step kernel.

use imcabs::dynamics::{DynamicsModel, NoiseStructure};
use imcabs::geometry::{partition_domain, Region, StatePartition};
use imcabs::noise::NoiseModel;
use rand::Rng;

use crate::dist::Dist;

/// `x_i' = g_i(x) + w_i` or `x_i' = g_i(x) * w_i` with
/// `g_i(x) = offset_i + sum_j linear_ij x_j + wobble_i sin(x_i)`.
#[derive(Debug, Clone)]
pub struct RandomSystem {
    pub structure: NoiseStructure,
    pub domain: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
    pub offset: Vec<f64>,
    pub linear: Vec<Vec<f64>>,
    pub wobble: Vec<f64>,
    pub noise: Vec<Dist>,
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

impl RandomSystem {
    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn nominal(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let lin: f64 = self.linear[i].iter().zip(x).map(|(a, v)| a * v).sum();
                self.offset[i] + lin + self.wobble[i] * x[i].sin()
            })
            .collect()
    }

    pub fn expressions(&self) -> Vec<String> {
        (0..self.dim())
            .map(|i| {
                let mut terms = vec![format!("{:?}", self.offset[i])];
                for (j, a) in self.linear[i].iter().enumerate() {
                    terms.push(format!("{a:?} * x{}", j + 1));
                }
                if self.wobble[i] != 0.0 {
                    terms.push(format!("{:?} * sin(x{})", self.wobble[i], i + 1));
                }
                terms.join(" + ")
            })
            .collect()
    }

    pub fn model(&self) -> DynamicsModel {
        DynamicsModel::from_strings(&self.expressions(), self.structure).expect("generated expressions parse")
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel::new(self.noise.iter().map(Dist::to_component).collect()).expect("valid noise")
    }

    pub fn domain_region(&self) -> Region {
        let (lo, hi): (Vec<f64>, Vec<f64>) = self.domain.iter().copied().unzip();
        Region::from_bounds(&lo, &hi).unwrap()
    }

    pub fn partition(&self) -> StatePartition {
        partition_domain(&self.domain_region(), &self.resolution).unwrap()
    }

    /// `P(x_i' in [a, b])` given the nominal value `g`.
    fn component_prob(&self, i: usize, g: f64, a: f64, b: f64) -> f64 {
        let d = &self.noise[i];
        match self.structure {
            NoiseStructure::Additive => d.prob(a - g, b - g),
            NoiseStructure::Multiplicative => {
                assert!(g > 0.0, "multiplicative test systems keep g positive");
                d.prob(a / g, b / g)
            }
            NoiseStructure::General => unreachable!("only structured systems are generated"),
        }
    }

    /// Kernel from `x` to every cell of `partition`, then the unsafe sink.
    pub fn kernel(&self, x: &[f64], partition: &StatePartition) -> Vec<f64> {
        self.kernel_with(x, &Layout::of(partition, &self.domain))
    }

    fn kernel_with(&self, x: &[f64], layout: &Layout) -> Vec<f64> {
        let g = self.nominal(x);
        // per dimension: mass of each distinct cell interval, then of the domain
        let probs: Vec<Vec<f64>> = layout
            .axes
            .iter()
            .enumerate()
            .map(|(i, axis)| axis.iter().map(|&(a, b)| self.component_prob(i, g[i], a, b)).collect())
            .collect();
        let mut out: Vec<f64> = layout
            .cells
            .iter()
            .map(|idx| idx.iter().enumerate().map(|(i, &k)| probs[i][k]).product())
            .collect();
        let stay: f64 = probs.iter().map(|p| p[p.len() - 1]).product();
        out.push(1.0 - stay);
        out
    }

    /// Minimum and maximum kernel value to each state over a grid of
    /// `points` samples per dimension (endpoints included) inside `cell`.
    pub fn kernel_extremes(&self, partition: &StatePartition, cell: usize, points: usize) -> Vec<(f64, f64)> {
        let layout = Layout::of(partition, &self.domain);
        let ivs = partition.cell(cell).intervals().to_vec();
        let axes: Vec<Vec<f64>> = ivs
            .iter()
            .map(|iv| (0..points).map(|k| iv.lo + (iv.hi - iv.lo) * k as f64 / (points - 1) as f64).collect())
            .collect();
        let mut ext = vec![(f64::INFINITY, f64::NEG_INFINITY); partition.state_count()];
        let total = points.pow(ivs.len() as u32);
        let mut x = vec![0.0; ivs.len()];
        for flat in 0..total {
            let mut r = flat;
            for d in (0..ivs.len()).rev() {
                x[d] = axes[d][r % points];
                r /= points;
            }
            for (e, k) in ext.iter_mut().zip(self.kernel_with(&x, &layout)) {
                e.0 = e.0.min(k);
                e.1 = e.1.max(k);
            }
        }
        ext
    }
}

/// Distinct cell intervals per dimension (domain appended last) and each
/// cell's position in those lists.
struct Layout {
    axes: Vec<Vec<(f64, f64)>>,
    cells: Vec<Vec<usize>>,
}

impl Layout {
    fn of(partition: &StatePartition, domain: &[(f64, f64)]) -> Self {
        let mut axes: Vec<Vec<(f64, f64)>> = vec![Vec::new(); domain.len()];
        let cells = partition
            .cells()
            .iter()
            .map(|c| {
                c.intervals()
                    .iter()
                    .enumerate()
                    .map(|(i, iv)| {
                        let key = (iv.lo, iv.hi);
                        axes[i].iter().position(|&k| k == key).unwrap_or_else(|| {
                            axes[i].push(key);
                            axes[i].len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        for (axis, &d) in axes.iter_mut().zip(domain) {
            axis.push(d);
        }
        Layout { axes, cells }
    }
}

fn uniform_between<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn additive_noise<R: Rng>(rng: &mut R, kind: usize) -> Dist {
    match kind % 3 {
        0 => {
            let u = round3(uniform_between(rng, 0.05, 0.4));
            Dist::Uniform { lo: -u, hi: u }
        }
        1 => Dist::TruncNormal {
            mean: round3(uniform_between(rng, -0.1, 0.1)),
            sd: round3(uniform_between(rng, 0.05, 0.3)),
            lo: round3(uniform_between(rng, -0.5, -0.15)),
            hi: round3(uniform_between(rng, 0.15, 0.5)),
        },
        _ => {
            let w = round3(uniform_between(rng, 0.2, 0.8));
            Dist::Mixture(vec![
                (w, Dist::Uniform { lo: -0.3, hi: round3(uniform_between(rng, -0.25, -0.05)) }),
                (
                    1.0 - w,
                    Dist::TruncNormal {
                        mean: 0.1,
                        sd: round3(uniform_between(rng, 0.05, 0.2)),
                        lo: 0.0,
                        hi: 0.3,
                    },
                ),
            ])
        }
    }
}

pub fn positive_noise<R: Rng>(rng: &mut R, kind: usize) -> Dist {
    match kind % 3 {
        0 => {
            let u = round3(uniform_between(rng, 0.05, 0.3));
            Dist::Uniform { lo: 1.0 - u, hi: 1.0 + u }
        }
        1 => {
            let u = round3(uniform_between(rng, 0.08, 0.3));
            Dist::TruncNormal {
                mean: 1.0,
                sd: round3(uniform_between(rng, 0.05, 0.2)),
                lo: 1.0 - u,
                hi: 1.0 + u,
            }
        }
        _ => {
            let w = round3(uniform_between(rng, 0.2, 0.8));
            Dist::Mixture(vec![
                (w, Dist::Uniform { lo: 0.8, hi: 0.95 }),
                (1.0 - w, Dist::Uniform { lo: 1.0, hi: round3(uniform_between(rng, 1.05, 1.25)) }),
            ])
        }
    }
}

/// System number `index` of a deterministic family cycling through
/// dimension (1, 2), structure (additive, multiplicative) and noise law
/// (uniform, truncated Gaussian, mixture).
pub fn random_system<R: Rng>(rng: &mut R, index: usize) -> RandomSystem {
    let dim = 1 + index % 2;
    let additive = (index / 2).is_multiple_of(2);
    let noise_kind = index / 4;
    let (structure, domain, resolution) = if additive {
        (NoiseStructure::Additive, (-1.0, 1.0), if dim == 1 { 8 } else { 5 })
    } else {
        (NoiseStructure::Multiplicative, (0.5, 2.5), if dim == 1 { 8 } else { 5 })
    };
    let mut linear = vec![vec![0.0; dim]; dim];
    let mut offset = vec![0.0; dim];
    let mut wobble = vec![0.0; dim];
    for i in 0..dim {
        for (j, a) in linear[i].iter_mut().enumerate() {
            *a = round3(if additive {
                uniform_between(rng, -0.9, 0.9) * if i == j { 1.2 } else { 0.6 }
            } else if i == j {
                uniform_between(rng, 0.4, 0.9)
            } else {
                uniform_between(rng, 0.02, 0.2)
            });
        }
        if additive {
            offset[i] = round3(uniform_between(rng, -0.3, 0.3));
            wobble[i] = round3(uniform_between(rng, 0.0, 0.3));
        } else {
            offset[i] = round3(uniform_between(rng, 0.0, 0.3));
        }
    }
    let noise = (0..dim)
        .map(|_| if additive { additive_noise(rng, noise_kind) } else { positive_noise(rng, noise_kind) })
        .collect();
    RandomSystem {
        structure,
        domain: vec![domain; dim],
        resolution: vec![resolution; dim],
        offset,
        linear,
        wobble,
        noise,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn kernel_rows_sum_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for k in 0..12 {
            let sys = random_system(&mut rng, k);
            let p = sys.partition();
            let x = p.cell(p.len() / 2).center();
            let total: f64 = sys.kernel(&x, &p).iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "system {k}: {total}");
        }
    }

    #[test]
    fn hand_computed_kernel() {
        // x' = x + w, w ~ U(-0.5, 0.5), cells of width 0.5 on [0, 2]; from
        // x = 0.75 the successor is uniform on [0.25, 1.25]
        let sys = RandomSystem {
            structure: NoiseStructure::Additive,
            domain: vec![(0.0, 2.0)],
            resolution: vec![4],
            offset: vec![0.0],
            linear: vec![vec![1.0]],
            wobble: vec![0.0],
            noise: vec![Dist::Uniform { lo: -0.5, hi: 0.5 }],
        };
        let k = sys.kernel(&[0.75], &sys.partition());
        let want = [0.25, 0.5, 0.25, 0.0, 0.0];
        for (a, b) in k.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(sys.expressions(), vec!["0.0 + 1.0 * x1".to_string()]);
    }

    #[test]
    fn generated_models_match_nominal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for k in 0..8 {
            let sys = random_system(&mut rng, k);
            let model = sys.model();
            let x: Vec<f64> = sys.domain.iter().map(|(a, b)| 0.3 * a + 0.7 * b).collect();
            let w = if sys.structure == NoiseStructure::Additive { vec![0.0; sys.dim()] } else { vec![1.0; sys.dim()] };
            let got = model.eval_point(&x, &w).unwrap();
            for (a, b) in got.iter().zip(sys.nominal(&x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
