//! Seeded random kernels for the ladder identity suite.

use fermi_rg::ladders::{FourLegged, Propagator, Space};
use num_complex::Complex64;
use rand::Rng;

fn rc(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Undirected space with 1 to 3 points and 1 or 2 spin states.
pub fn space(rng: &mut impl Rng) -> Space {
    let nu = rng.gen_range(1..=3);
    let ns = rng.gen_range(1..=2);
    let w: Vec<f64> = (0..nu).map(|_| rng.gen_range(0.5..1.5)).collect();
    Space { weights: w.iter().flat_map(|&x| [x, x]).collect(), ns }
}

pub fn kernel(space: &Space, rng: &mut impl Rng) -> FourLegged {
    let mut f = FourLegged::zero(space.clone());
    for v in f.data.iter_mut() {
        *v = rc(rng);
    }
    f
}

/// Zeroes entries without exactly two creation and two annihilation legs.
pub fn conserve_particle_number(f: &mut FourLegged) {
    let (ns, nz) = (f.space.ns, f.space.nz());
    for i in 0..f.data.len() {
        let z = [i / (nz * nz * nz), (i / (nz * nz)) % nz, (i / nz) % nz, i % nz];
        if z.iter().map(|&zz| (zz / ns) % 2).sum::<usize>() != 2 {
            f.data[i] = Complex64::default();
        }
    }
}

/// Antisymmetric within each leg pair and particle-number conserving.
pub fn rung(space: &Space, rng: &mut impl Rng) -> FourLegged {
    let g = kernel(space, rng);
    let mut f = FourLegged::from_fn(space.clone(), |z| {
        g.at(z) - g.at([z[1], z[0], z[2], z[3]]) - g.at([z[0], z[1], z[3], z[2]]) + g.at([z[1], z[0], z[3], z[2]])
    });
    conserve_particle_number(&mut f);
    f
}

/// Fully antisymmetric, particle-number conserving kernel.
pub fn antisymmetric(space: &Space, rng: &mut impl Rng) -> FourLegged {
    let mut f = kernel(space, rng).antisymmetrize();
    conserve_particle_number(&mut f);
    f
}

/// Propagator connecting only opposite creation bits.
pub fn propagator(nx: usize, rng: &mut impl Rng) -> Propagator {
    let vals: Vec<Complex64> = (0..nx * nx).map(|_| rc(rng)).collect();
    Propagator::from_fn(nx, |x, y| if x % 2 != y % 2 { vals[x * nx + y] } else { Complex64::default() })
}
