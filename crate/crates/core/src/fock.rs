//! Occupation-number basis at fixed particle number.
//!
//! A state is packed into a `u64` with `bits` bits per site (1 for hard-core,
//! 4 otherwise), site `i` in the lowest bits at offset `i * bits`. States are
//! ordered by their packed value, i.e. lexicographically with the highest
//! site most significant. Ranking uses a table of restricted composition
//! counts, which for hard-core bosons reduces to the combinatorial number
//! system.

use crate::error::{Error, Result};

/// Hard limit on basis size; enough for 16 soft-core sites at half filling.
pub const DEFAULT_MAX_DIM: usize = 20_000_000;

#[derive(Clone, Debug)]
pub struct FockBasis {
    n_sites: usize,
    n_particles: usize,
    n_max: usize,
    bits: u32,
    mask: u64,
    states: Vec<u64>,
    /// `counts[s][p]`: ways to put `p` particles on `s` sites with at most `n_max` each.
    counts: Vec<Vec<u64>>,
}

impl FockBasis {
    pub fn enumerate(n_sites: usize, n_particles: usize, n_max: usize) -> Result<Self> {
        Self::enumerate_with_limit(n_sites, n_particles, n_max, DEFAULT_MAX_DIM)
    }

    pub fn enumerate_with_limit(
        n_sites: usize,
        n_particles: usize,
        n_max: usize,
        max_dim: usize,
    ) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidSpec("n_max must be at least 1".into()));
        }
        let bits: u32 = if n_max == 1 { 1 } else { 4 };
        if n_max > 15 || n_sites as u32 * bits > 64 {
            return Err(Error::InvalidSpec(format!(
                "{n_sites} sites with n_max = {n_max} do not fit a 64-bit state"
            )));
        }
        if n_particles > n_max * n_sites {
            return Err(Error::InvalidSpec(format!(
                "{n_particles} particles exceed capacity of {n_sites} sites"
            )));
        }
        let counts = composition_counts(n_sites, n_particles, n_max);
        let dim = counts[n_sites][n_particles];
        if dim > max_dim as u64 {
            return Err(Error::Capacity { dim: dim as usize, limit: max_dim });
        }
        let mut states = Vec::with_capacity(dim as usize);
        let mut occ = vec![0usize; n_sites];
        fill(&mut occ, n_sites, n_particles, n_max, bits, &mut states);
        debug_assert_eq!(states.len() as u64, dim);
        Ok(FockBasis {
            n_sites,
            n_particles,
            n_max,
            bits,
            mask: (1u64 << bits) - 1,
            states,
            counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn is_hard_core(&self) -> bool {
        self.n_max == 1
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn unrank(&self, index: usize) -> u64 {
        self.states[index]
    }

    #[inline]
    pub fn occupation(&self, state: u64, site: usize) -> usize {
        ((state >> (site as u32 * self.bits)) & self.mask) as usize
    }

    pub fn occupations(&self, state: u64) -> Vec<usize> {
        (0..self.n_sites).map(|i| self.occupation(state, i)).collect()
    }

    pub fn pack(&self, occ: &[usize]) -> u64 {
        occ.iter()
            .enumerate()
            .fold(0u64, |acc, (i, &n)| acc | ((n as u64) << (i as u32 * self.bits)))
    }

    /// Index of `state` in the basis; `None` if it is not a member.
    pub fn rank(&self, state: u64) -> Option<usize> {
        let mut remaining = self.n_particles;
        let mut index = 0u64;
        for site in (0..self.n_sites).rev() {
            let n = self.occupation(state, site);
            if n > self.n_max || n > remaining {
                return None;
            }
            for smaller in 0..n {
                index += self.counts[site][remaining - smaller];
            }
            remaining -= n;
        }
        let used = self.n_sites as u32 * self.bits;
        if remaining != 0 || (used < 64 && state >> used != 0) {
            return None;
        }
        Some(index as usize)
    }

    /// Matrix element of `a†_i a_j` on `state`: the target state and the
    /// bosonic amplitude `sqrt(n_j (n_i + 1))`, or `None` if it vanishes.
    #[inline]
    pub fn apply_hop(&self, state: u64, i: usize, j: usize) -> Option<(u64, f64)> {
        debug_assert_ne!(i, j);
        let nj = self.occupation(state, j);
        if nj == 0 {
            return None;
        }
        let ni = self.occupation(state, i);
        if ni == self.n_max {
            return None;
        }
        let target = state - (1u64 << (j as u32 * self.bits)) + (1u64 << (i as u32 * self.bits));
        let amp = if self.n_max == 1 { 1.0 } else { ((nj * (ni + 1)) as f64).sqrt() };
        Some((target, amp))
    }
}

/// Number of states of `n_sites` with `n_particles` and occupancy cap `n_max`.
pub fn sector_dimension(n_sites: usize, n_particles: usize, n_max: usize) -> u64 {
    if n_particles > n_max * n_sites {
        return 0;
    }
    composition_counts(n_sites, n_particles, n_max)[n_sites][n_particles]
}

fn composition_counts(n_sites: usize, n_particles: usize, n_max: usize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; n_particles + 1]; n_sites + 1];
    counts[0][0] = 1;
    for s in 1..=n_sites {
        for p in 0..=n_particles {
            counts[s][p] = (0..=p.min(n_max)).map(|k| counts[s - 1][p - k]).sum();
        }
    }
    counts
}

// Highest site varies slowest, so pushing in this order yields ascending packed values.
fn fill(occ: &mut [usize], sites_left: usize, particles: usize, n_max: usize, bits: u32, out: &mut Vec<u64>) {
    if sites_left == 0 {
        if particles == 0 {
            let packed = occ
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &n)| acc | ((n as u64) << (i as u32 * bits)));
            out.push(packed);
        }
        return;
    }
    let site = sites_left - 1;
    if particles > n_max * sites_left {
        return;
    }
    for n in 0..=particles.min(n_max) {
        occ[site] = n;
        fill(occ, site, particles - n, n_max, bits, out);
    }
    occ[site] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent generate-and-count: all occupation vectors, filtered.
    fn brute_count(n_sites: usize, n_particles: usize, n_max: usize) -> usize {
        let mut count = 0;
        let mut occ = vec![0usize; n_sites];
        loop {
            if occ.iter().sum::<usize>() == n_particles {
                count += 1;
            }
            let mut k = 0;
            loop {
                if k == n_sites {
                    return count;
                }
                occ[k] += 1;
                if occ[k] <= n_max {
                    break;
                }
                occ[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn dimensions() {
        assert_eq!(FockBasis::enumerate(16, 8, 1).unwrap().dim(), 12870);
        let vac = FockBasis::enumerate(4, 0, 1).unwrap();
        assert_eq!(vac.dim(), 1);
        assert_eq!(vac.unrank(0), 0);
        assert_eq!(sector_dimension(16, 8, 4), 477_258);
        for (s, p, m) in [(6, 3, 2), (7, 5, 3), (5, 4, 4), (8, 4, 1), (9, 6, 2)] {
            assert_eq!(sector_dimension(s, p, m) as usize, brute_count(s, p, m));
        }
    }

    #[test]
    fn soft_core_16_8_4_matches_recursive_count() {
        // Recursive oracle independent of the count table.
        fn rec(s: usize, p: usize, m: usize) -> u64 {
            if s == 0 {
                return (p == 0) as u64;
            }
            (0..=p.min(m)).map(|k| rec(s - 1, p - k, m)).sum()
        }
        let basis = FockBasis::enumerate(16, 8, 4).unwrap();
        assert_eq!(basis.dim() as u64, rec(16, 8, 4));
    }

    #[test]
    fn full_width_soft_core_state() {
        // 16 sites x 4 bits fill the whole word.
        let b = FockBasis::enumerate(16, 2, 4).unwrap();
        for (i, &st) in b.states().iter().enumerate() {
            assert_eq!(b.rank(st), Some(i));
        }
        let top = b.pack(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2]);
        assert_eq!(b.rank(top), Some(b.dim() - 1));
    }

    #[test]
    fn capacity_limit() {
        let err = FockBasis::enumerate_with_limit(16, 8, 1, 1000).unwrap_err();
        assert!(matches!(err, Error::Capacity { dim: 12870, limit: 1000 }));
    }

    #[test]
    fn hops() {
        let hc = FockBasis::enumerate(4, 2, 1).unwrap();
        let s = hc.pack(&[1, 0, 1, 0]);
        let (t, amp) = hc.apply_hop(s, 1, 0).unwrap();
        assert_eq!(hc.occupations(t), vec![0, 1, 1, 0]);
        assert_eq!(amp, 1.0);
        assert!(hc.apply_hop(s, 2, 0).is_none());
        assert!(hc.apply_hop(s, 0, 1).is_none());

        let sc = FockBasis::enumerate(3, 5, 4).unwrap();
        let s = sc.pack(&[3, 2, 0]);
        let (t, amp) = sc.apply_hop(s, 0, 1).unwrap();
        assert_eq!(sc.occupations(t), vec![4, 1, 0]);
        assert!((amp - 8f64.sqrt()).abs() < 1e-15);
        assert!(sc.apply_hop(t, 0, 1).is_none());
    }

    #[test]
    fn ordering_and_membership() {
        for (s, p, m) in [(9, 4, 1), (6, 5, 3)] {
            let b = FockBasis::enumerate(s, p, m).unwrap();
            assert!(b.states().windows(2).all(|w| w[0] < w[1]));
            for &st in b.states() {
                let occ = b.occupations(st);
                assert_eq!(occ.iter().sum::<usize>(), p);
                assert!(occ.iter().all(|&n| n <= m));
            }
        }
        let b = FockBasis::enumerate(4, 2, 1).unwrap();
        assert_eq!(b.rank(b.pack(&[1, 1, 1, 0])), None);
        assert_eq!(b.rank(1 << 5), None);
    }

    proptest! {
        #[test]
        fn rank_unrank_round_trip(n_sites in 2usize..10, fill in 0.0f64..1.0, n_max in 1usize..4) {
            let n_particles = ((n_sites * n_max) as f64 * fill) as usize;
            let b = FockBasis::enumerate(n_sites, n_particles, n_max).unwrap();
            for i in 0..b.dim() {
                prop_assert_eq!(b.rank(b.unrank(i)), Some(i));
            }
        }

        #[test]
        fn hop_conserves_particles(n_sites in 2usize..8, n_max in 1usize..4, seed in 0usize..1000) {
            let n_particles = n_sites * n_max / 2;
            let b = FockBasis::enumerate(n_sites, n_particles, n_max).unwrap();
            let st = b.unrank(seed % b.dim());
            for i in 0..n_sites {
                for j in 0..n_sites {
                    if i == j { continue; }
                    if let Some((t, amp)) = b.apply_hop(st, i, j) {
                        prop_assert!(b.rank(t).is_some());
                        let (ni, nj) = (b.occupation(st, i), b.occupation(st, j));
                        prop_assert!((amp - ((nj * (ni + 1)) as f64).sqrt()).abs() < 1e-14);
                    }
                }
            }
        }
    }
}
