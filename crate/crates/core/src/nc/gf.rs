//! Finite-field rank oracle for random linear network coding.
//!
//! Draws `n_sent` uniformly random coefficient vectors of length `n_c` and
//! checks by Gaussian elimination whether they span the full space.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Reduction polynomial `x^8 + x^4 + x^3 + x^2 + 1`.
pub const GF256_POLY: u16 = 0x11D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Gf2,
    Gf256,
}

impl Field {
    pub fn order(self) -> u32 {
        match self {
            Field::Gf2 => 2,
            Field::Gf256 => 256,
        }
    }

    fn mul(self, a: u8, b: u8) -> u8 {
        match self {
            Field::Gf2 => a & b,
            Field::Gf256 => gf256_mul(a, b),
        }
    }

    fn inv(self, a: u8) -> u8 {
        match self {
            Field::Gf2 => a,
            Field::Gf256 => gf256_inv(a),
        }
    }

    fn random<R: Rng>(self, rng: &mut R) -> u8 {
        match self {
            Field::Gf2 => rng.random::<u8>() & 1,
            Field::Gf256 => rng.random(),
        }
    }
}

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        for (i, e) in exp.iter_mut().take(255).enumerate() {
            *e = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= GF256_POLY;
            }
        }
        for i in 255..512 {
            exp[i] = exp[i - 255];
        }
        Tables { exp, log }
    })
}

pub fn gf256_mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let t = tables();
    t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize]
}

/// Multiplicative inverse; `0` maps to `0`.
pub fn gf256_inv(a: u8) -> u8 {
    if a == 0 {
        return 0;
    }
    let t = tables();
    t.exp[255 - t.log[a as usize] as usize]
}

/// Rank of the rows by Gaussian elimination over `field`. Rows are consumed.
pub fn rank(field: Field, rows: &mut [Vec<u8>]) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = field.inv(rows[rank][col]);
        for v in rows[rank].iter_mut() {
            *v = field.mul(*v, inv);
        }
        let (head, tail) = rows.split_at_mut(rank + 1);
        let pivot_row = &head[rank];
        for row in tail.iter_mut() {
            let factor = row[col];
            if factor != 0 {
                for (x, &p) in row.iter_mut().zip(pivot_row) {
                    *x ^= field.mul(factor, p);
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Fraction of trials in which `n_sent` random vectors reach rank `n_c`.
pub fn gf_rank_oracle(n_c: usize, n_sent: usize, trials: u64, seed: u64, field: Field) -> f64 {
    if n_c == 0 {
        return 1.0;
    }
    if trials == 0 || n_sent < n_c {
        return 0.0;
    }
    let full: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let mut rows: Vec<Vec<u8>> = (0..n_sent)
                .map(|_| (0..n_c).map(|_| field.random(&mut rng)).collect())
                .collect();
            u64::from(rank(field, &mut rows) == n_c)
        })
        .sum();
    full as f64 / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= (GF256_POLY & 0xFF) as u8;
            }
            b >>= 1;
        }
        p
    }

    #[test]
    fn table_multiply_matches_shift_and_add() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(gf256_mul(a, b), slow_mul(a, b));
            }
        }
    }

    #[test]
    fn inverses() {
        for a in 1..=255u8 {
            assert_eq!(gf256_mul(a, gf256_inv(a)), 1);
        }
    }

    #[test]
    fn rank_of_known_matrices() {
        let mut id = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        assert_eq!(rank(Field::Gf256, &mut id), 3);
        let mut dup = vec![vec![3, 7], vec![gf256_mul(3, 9), gf256_mul(7, 9)]];
        assert_eq!(rank(Field::Gf256, &mut dup), 1);
        let mut gf2 = vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]];
        assert_eq!(rank(Field::Gf2, &mut gf2), 2);
    }

    #[test]
    fn oracle_edge_cases() {
        assert_eq!(gf_rank_oracle(0, 0, 10, 1, Field::Gf256), 1.0);
        let p = gf_rank_oracle(1, 1, 200_000, 5, Field::Gf256);
        let expect = 255.0 / 256.0;
        let se = (expect * (1.0 - expect) / 200_000.0f64).sqrt();
        assert!((p - expect).abs() <= 3.0 * se, "{p}");
        assert_eq!(
            gf_rank_oracle(4, 6, 1000, 3, Field::Gf256),
            gf_rank_oracle(4, 6, 1000, 3, Field::Gf256)
        );
    }

    #[test]
    fn binary_field_degrades() {
        let gf2 = gf_rank_oracle(8, 8, 20_000, 2, Field::Gf2);
        let gf256 = gf_rank_oracle(8, 8, 20_000, 2, Field::Gf256);
        // prod_{k=1..8} (1 - 2^-k) ~ 0.2899
        assert!((gf2 - 0.2899).abs() < 0.02, "{gf2}");
        assert!(gf256 > 0.99);
    }
}
