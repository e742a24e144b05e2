//! Kernel-size planning for omni-scale convolution blocks.
//!
//! An omni-scale block stacks three convolution layers: the first two use one
//! branch per kernel size drawn from `{1} ∪ primes ≤ M`, the third uses kernel
//! sizes `{1, 2}`. Summing one kernel choice per layer gives the receptive
//! field of a path, and with a suitable prime bound `M` the set of reachable
//! receptive fields covers every integer from 1 to half the input length.
//! This module plans those configurations (prime sieve, bound selection,
//! coverage enumeration), accounts their weight cost, and solves the channel
//! count under a weight budget.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest even number for which the two-prime decomposition is treated as
/// verified; inputs beyond this are rejected rather than assumed.
pub const GOLDBACH_VALIDATED_MAX: u64 = 400_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("weight budget {budget} cannot fit the block; {required} weights needed at one channel per branch")]
    InfeasibleBudget { budget: u64, required: u64 },
}

type Result<T> = core::result::Result<T, ConfigError>;

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::InvalidArgument(msg.into())
}

/// Kernel-size lists per layer plus channel counts: the architecture genotype
/// of one omni-scale block.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OsBlockSpec {
    /// Kernel sizes per layer, each list strictly increasing.
    pub layer_kernel_lists: Vec<Vec<usize>>,
    /// Output channels per branch (uniform across branches).
    pub branch_channels: usize,
    /// Channels of the block input.
    pub in_channels: usize,
}

impl OsBlockSpec {
    /// Builds a spec from explicit kernel lists, checking the structural
    /// invariants shared by every block shape (canonical or not).
    pub fn new(
        layer_kernel_lists: Vec<Vec<usize>>,
        branch_channels: usize,
        in_channels: usize,
    ) -> Result<Self> {
        if layer_kernel_lists.is_empty() {
            return Err(invalid("at least one layer required"));
        }
        for (i, list) in layer_kernel_lists.iter().enumerate() {
            if list.is_empty() {
                return Err(invalid(alloc::format!("layer {i} has no kernel sizes")));
            }
            if list[0] == 0 {
                return Err(invalid(alloc::format!("layer {i} has a zero kernel size")));
            }
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(invalid(alloc::format!(
                    "layer {i} kernel sizes must be strictly increasing"
                )));
            }
        }
        if branch_channels == 0 || in_channels == 0 {
            return Err(invalid("channel counts must be positive"));
        }
        Ok(Self {
            layer_kernel_lists,
            branch_channels,
            in_channels,
        })
    }

    /// The canonical three-layer block for a prime bound: layers one and two
    /// share `{1} ∪ primes ≤ bound`, layer three is `[1, 2]`.
    pub fn canonical(prime_bound: u64, branch_channels: usize, in_channels: usize) -> Result<Self> {
        Self::new(
            canonical_kernel_lists(prime_bound)?,
            branch_channels,
            in_channels,
        )
    }

    /// Whether the lists have the canonical shape (three layers, first two
    /// equal and made of 1 plus primes, third exactly `[1, 2]`).
    pub fn is_canonical(&self) -> bool {
        let l = &self.layer_kernel_lists;
        l.len() == 3
            && l[0] == l[1]
            && l[2] == [1, 2]
            && l[0].first() == Some(&1)
            && l[0].len() >= 2
            && l[0][1..].iter().all(|&k| is_prime(k as u64))
    }

    /// Channels entering each layer, derived from branch fan-out.
    fn layer_in_channels(&self) -> Vec<usize> {
        let mut ins = Vec::with_capacity(self.layer_kernel_lists.len());
        let mut cur = self.in_channels;
        for list in &self.layer_kernel_lists {
            ins.push(cur);
            cur = self.branch_channels * list.len();
        }
        ins
    }

    /// Channels leaving the block (branch count of the last layer times the
    /// per-branch channel count).
    pub fn out_channels(&self) -> usize {
        self.branch_channels * self.layer_kernel_lists.last().map_or(0, Vec::len)
    }
}

/// Weight-only cost of one block (BatchNorm and bias excluded).
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CostBreakdown {
    pub per_layer_weights: Vec<u64>,
    pub total_weights: u64,
    pub max_rf: usize,
}

/// Ascending list of all primes `≤ m`. Requires `m ≥ 2`.
pub fn primes_up_to(m: u64) -> Result<Vec<u64>> {
    if m < 2 {
        return Err(invalid("prime bound must be at least 2"));
    }
    let m = usize::try_from(m).map_err(|_| invalid("prime bound too large to sieve"))?;
    let mut composite = vec![false; m + 1];
    let mut primes = Vec::new();
    for p in 2..=m {
        if !composite[p] {
            primes.push(p as u64);
            let mut q = p * p;
            while q <= m {
                composite[q] = true;
                q += p;
            }
        }
    }
    Ok(primes)
}

/// Deterministic Miller-Rabin primality test, exact over the whole `u64` range.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    // These witnesses decide primality for all n < 3.3e24.
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// The canonical per-layer kernel lists for a prime bound.
pub fn canonical_kernel_lists(prime_bound: u64) -> Result<Vec<Vec<usize>>> {
    let mut first: Vec<usize> = vec![1];
    first.extend(primes_up_to(prime_bound)?.into_iter().map(|p| p as usize));
    Ok(vec![first.clone(), first, vec![1, 2]])
}

/// Marks every receptive field reachable by choosing one kernel per layer at
/// stride 1: `rf = 1 + Σ (kᵢ − 1)`. Index `r` of the returned bitmap is set
/// when receptive field `r` is reachable.
fn coverage_bitmap(layer_kernel_lists: &[Vec<usize>]) -> Result<Vec<bool>> {
    if layer_kernel_lists.is_empty() || layer_kernel_lists.iter().any(Vec::is_empty) {
        return Err(invalid("coverage needs at least one kernel size per layer"));
    }
    let max_extent: usize = layer_kernel_lists
        .iter()
        .map(|l| l.iter().max().unwrap() - 1)
        .sum();
    // reachable[s] == true when some kernel choice over the layers seen so
    // far sums to an extent of s.
    let mut reachable = vec![false; max_extent + 1];
    reachable[0] = true;
    for list in layer_kernel_lists {
        let mut next = vec![false; max_extent + 1];
        for (s, _) in reachable.iter().enumerate().filter(|(_, &r)| r) {
            for &k in list {
                next[s + (k - 1)] = true;
            }
        }
        reachable = next;
    }
    let mut rf = vec![false; max_extent + 2];
    for (s, _) in reachable.iter().enumerate().filter(|(_, &r)| r) {
        rf[s + 1] = true;
    }
    Ok(rf)
}

/// Every receptive field reachable by the given layer lists, by exhaustive
/// enumeration over one kernel choice per layer.
pub fn coverage_set(layer_kernel_lists: &[Vec<usize>]) -> Result<BTreeSet<usize>> {
    let bits = coverage_bitmap(layer_kernel_lists)?;
    Ok(bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(r, _)| r)
        .collect())
}

/// True when the lists reach every receptive field in `1..=target`.
pub fn covers_through(layer_kernel_lists: &[Vec<usize>], target: usize) -> Result<bool> {
    let bits = coverage_bitmap(layer_kernel_lists)?;
    if bits.len() <= target {
        return Ok(false);
    }
    Ok(bits[1..=target].iter().all(|&b| b))
}

/// Smallest prime bound whose canonical block covers receptive fields
/// `1..=⌈n/2⌉` for input length `n`.
///
/// `n` is accepted up to the validated two-prime decomposition range; the
/// search itself enumerates coverage, so it is meant for real series lengths
/// (up to around 10⁵), not the full numeric range.
pub fn select_prime_bound(series_len: u64) -> Result<u64> {
    if series_len < 2 {
        return Err(invalid("series length must be at least 2"));
    }
    if series_len > GOLDBACH_VALIDATED_MAX {
        return Err(invalid("series length beyond the validated coverage range"));
    }
    let target = usize::try_from(series_len.div_ceil(2))
        .map_err(|_| invalid("series length too large to enumerate"))?;
    prime_bound_for_target(target.max(1))
}

/// Smallest prime bound whose canonical block covers receptive fields
/// `1..=target_rf`.
pub fn prime_bound_for_target(target_rf: usize) -> Result<u64> {
    if target_rf == 0 {
        return Err(invalid("target receptive field must be at least 1"));
    }
    let mut bound = 2u64;
    loop {
        // Max receptive field of the canonical block is 2*bound; anything
        // smaller cannot cover, so skip the enumeration outright.
        if 2 * bound >= target_rf as u64 {
            let lists = canonical_kernel_lists(bound)?;
            if covers_through(&lists, target_rf)? {
                return Ok(bound);
            }
        }
        bound = next_prime(bound);
    }
}

fn next_prime(p: u64) -> u64 {
    let mut q = p + 1;
    while !is_prime(q) {
        q += 1;
    }
    q
}

/// Splits an even number `4 ≤ e ≤ 4×10¹⁴` into two primes, returning the pair
/// with the smallest first element.
pub fn goldbach_decompose(e: u64) -> Result<(u64, u64)> {
    if e < 4 || e % 2 != 0 {
        return Err(invalid("two-prime decomposition needs an even number >= 4"));
    }
    if e > GOLDBACH_VALIDATED_MAX {
        return Err(invalid("beyond the validated decomposition range"));
    }
    let mut p = 2u64;
    while p <= e / 2 {
        if is_prime(p) && is_prime(e - p) {
            return Ok((p, e - p));
        }
        p = if p == 2 { 3 } else { p + 2 };
    }
    // Unreachable within the validated range; surface it rather than panic.
    Err(invalid("no two-prime decomposition found"))
}

/// Parameter cost of a single-channel kernel chain scaled by a channel count:
/// `channels × (receptive_field + (layers − 1) × stride)`.
pub fn param_cost(channels: u64, receptive_field: u64, layers: u64, stride: u64) -> Result<u64> {
    if channels == 0 || receptive_field == 0 || layers == 0 || stride == 0 {
        return Err(invalid("cost model inputs must be positive"));
    }
    Ok(channels * (receptive_field + (layers - 1) * stride))
}

/// Exact weight count per layer for a block spec. Layer `ℓ` holds one
/// convolution per kernel size, each mapping the layer input channels to
/// `branch_channels` outputs; the next layer sees the concatenation of all
/// branch outputs. BatchNorm and bias parameters are not counted.
pub fn count_block_weights(spec: &OsBlockSpec) -> CostBreakdown {
    let ins = spec.layer_in_channels();
    let mut per_layer = Vec::with_capacity(spec.layer_kernel_lists.len());
    for (list, in_ch) in spec.layer_kernel_lists.iter().zip(&ins) {
        let kernel_sum: u64 = list.iter().map(|&k| k as u64).sum();
        per_layer.push(*in_ch as u64 * spec.branch_channels as u64 * kernel_sum);
    }
    let max_rf = 1 + spec
        .layer_kernel_lists
        .iter()
        .map(|l| l.iter().max().unwrap() - 1)
        .sum::<usize>();
    CostBreakdown {
        total_weights: per_layer.iter().sum(),
        per_layer_weights: per_layer,
        max_rf,
    }
}

/// Largest uniform per-branch channel count whose block weight count stays
/// within the budget. Errors when even one channel per branch exceeds it.
pub fn allocate_channels(
    weight_budget: u64,
    layer_kernel_lists: &[Vec<usize>],
    in_channels: usize,
) -> Result<usize> {
    let weights_at = |c: usize| -> Result<u64> {
        let spec = OsBlockSpec::new(layer_kernel_lists.to_vec(), c, in_channels)?;
        Ok(count_block_weights(&spec).total_weights)
    };
    let base = weights_at(1)?;
    if base > weight_budget {
        return Err(ConfigError::InfeasibleBudget {
            budget: weight_budget,
            required: base,
        });
    }
    let mut hi = 1usize;
    while weights_at(hi * 2)? <= weight_budget {
        hi *= 2;
    }
    let mut lo = hi; // weights_at(hi) is known feasible
    let mut hi = hi * 2; // known infeasible
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if weights_at(mid)? <= weight_budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Cost comparison of the kernel-size families that reach receptive field `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SequenceComparison {
    /// Σ of `{1} ∪ primes ≤ r`, the prime-list layer cost.
    pub prime_sum: u64,
    /// Σ of `1..=r`, the arithmetic-sequence layer cost.
    pub arithmetic_sum: u64,
    /// Layers of doubling kernels `[1, 2, 4, 8, …]` needed to reach `r`
    /// exactly: the ones in the binary representation of `r`.
    pub geometric_layers_needed: u32,
}

/// Compares the prime-list kernel family against arithmetic and geometric
/// alternatives at receptive field `r ≥ 2`.
pub fn compare_sequences(r: u64) -> Result<SequenceComparison> {
    if r < 2 {
        return Err(invalid("receptive field must be at least 2"));
    }
    let prime_sum = 1 + primes_up_to(r)?.iter().sum::<u64>();
    Ok(SequenceComparison {
        prime_sum,
        arithmetic_sum: r * (r + 1) / 2,
        geometric_layers_needed: r.count_ones(),
    })
}
