//! Binary LDPC codes: construction, systematic encoding and sum-product
//! belief-propagation decoding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LdpcError {
    #[error("parity-check matrix leaves no information bits")]
    SingularCode,
    #[error("invalid parity-check matrix: {0}")]
    InvalidMatrix(String),
    #[error("generator check failed: G·Hᵀ != 0")]
    GeneratorMismatch,
    #[error("alist: {0}")]
    Alist(String),
}

type Bits = Vec<u64>;

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

#[inline]
fn get_bit(b: &[u64], i: usize) -> bool {
    b[i / 64] >> (i % 64) & 1 == 1
}

#[inline]
fn flip_bit(b: &mut [u64], i: usize) {
    b[i / 64] ^= 1 << (i % 64);
}

/// Sparse parity-check matrix plus the systematic encoder derived from it.
#[derive(Clone, Debug)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    checks: Vec<Vec<usize>>,
    vars: Vec<Vec<usize>>,
    /// Codeword positions carrying information bits, in info order.
    info_cols: Vec<usize>,
    /// For each pivot column, the info bits whose XOR sets it.
    parity: Vec<(usize, Bits)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub info: Vec<u8>,
    pub codeword: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

impl LdpcCode {
    /// Builds a code from the variable indices of each parity check.
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self, LdpcError> {
        if n == 0 || checks.is_empty() {
            return Err(LdpcError::InvalidMatrix("empty matrix".into()));
        }
        let mut vars = vec![Vec::new(); n];
        for (c, row) in checks.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v >= n {
                    return Err(LdpcError::InvalidMatrix(format!("check {c} references column {v} >= {n}")));
                }
                if row[..i].contains(&v) {
                    return Err(LdpcError::InvalidMatrix(format!("check {c} repeats column {v}")));
                }
                vars[v].push(c);
            }
        }
        // Reduced row echelon form over GF(2).
        let m = checks.len();
        let mut dense: Vec<Bits> = checks
            .iter()
            .map(|row| {
                let mut b = vec![0u64; words(n)];
                row.iter().for_each(|&v| flip_bit(&mut b, v));
                b
            })
            .collect();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n {
            if rank == m {
                break;
            }
            let Some(p) = (rank..m).find(|&r| get_bit(&dense[r], col)) else { continue };
            dense.swap(rank, p);
            let pivot_row = dense[rank].clone();
            for (r, row) in dense.iter_mut().enumerate() {
                if r != rank && get_bit(row, col) {
                    row.iter_mut().zip(&pivot_row).for_each(|(a, b)| *a ^= b);
                }
            }
            pivots.push(col);
            rank += 1;
        }
        let k = n - rank;
        if k == 0 {
            return Err(LdpcError::SingularCode);
        }
        let mut is_pivot = vec![false; n];
        pivots.iter().for_each(|&p| is_pivot[p] = true);
        let info_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let parity = pivots
            .iter()
            .enumerate()
            .map(|(r, &p)| {
                let mut b = vec![0u64; words(k)];
                for (j, &c) in info_cols.iter().enumerate() {
                    if get_bit(&dense[r], c) {
                        flip_bit(&mut b, j);
                    }
                }
                (p, b)
            })
            .collect();
        let code = Self { n, k, checks, vars, info_cols, parity };
        code.verify_generator()?;
        Ok(code)
    }

    /// Regular code built by progressive edge growth: every column has
    /// `col_weight` ones and every row `row_weight`. Seeds are tried in turn
    /// until the matrix has full rank, so `k = n - n·col_weight/row_weight`.
    pub fn peg_regular(n: usize, col_weight: usize, row_weight: usize, seed: u64) -> Result<Self, LdpcError> {
        if col_weight == 0 || row_weight == 0 || !(n * col_weight).is_multiple_of(row_weight) {
            return Err(LdpcError::InvalidMatrix(format!(
                "n={n} with weights ({col_weight}, {row_weight}) is not regular"
            )));
        }
        let m = n * col_weight / row_weight;
        for attempt in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
            let Some(checks) = peg_graph(n, m, col_weight, row_weight, &mut rng) else { continue };
            let code = Self::from_checks(n, checks)?;
            if code.k == n - m {
                return Ok(code);
            }
        }
        Err(LdpcError::SingularCode)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn column(&self, v: usize) -> &[usize] {
        &self.vars[v]
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    /// Systematic codeword for `info` (length `k`, values 0/1).
    pub fn encode(&self, info: &[u8]) -> Vec<u8> {
        assert_eq!(info.len(), self.k, "info block must have k bits");
        let mut packed = vec![0u64; words(self.k)];
        for (j, &b) in info.iter().enumerate() {
            if b & 1 == 1 {
                flip_bit(&mut packed, j);
            }
        }
        let mut cw = vec![0u8; self.n];
        for (j, &c) in self.info_cols.iter().enumerate() {
            cw[c] = info[j] & 1;
        }
        for (p, mask) in &self.parity {
            let ones: u32 = mask.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            cw[*p] = (ones & 1) as u8;
        }
        cw
    }

    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_cols.iter().map(|&c| codeword[c]).collect()
    }

    pub fn syndrome_is_zero(&self, codeword: &[u8]) -> bool {
        self.checks.iter().all(|row| row.iter().fold(0u8, |acc, &v| acc ^ codeword[v]) & 1 == 0)
    }

    /// Encodes every unit info vector and checks each against H.
    pub fn verify_generator(&self) -> Result<(), LdpcError> {
        let mut e = vec![0u8; self.k];
        for j in 0..self.k {
            e[j] = 1;
            if !self.syndrome_is_zero(&self.encode(&e)) {
                return Err(LdpcError::GeneratorMismatch);
            }
            e[j] = 0;
        }
        Ok(())
    }

    /// Sum-product decoding of one block of `n` channel LLRs (positive = 0).
    /// Stops as soon as the hard decision satisfies every check.
    pub fn decode<T: Real>(&self, llrs: &[T], max_iters: usize) -> DecodeOutcome {
        assert_eq!(llrs.len(), self.n, "need one LLR per code bit");
        let edges: usize = self.checks.iter().map(Vec::len).sum();
        let mut v2c = Vec::with_capacity(edges);
        let mut edge_var = Vec::with_capacity(edges);
        let mut row_start = Vec::with_capacity(self.checks.len() + 1);
        for row in &self.checks {
            row_start.push(edge_var.len());
            for &v in row {
                edge_var.push(v);
                v2c.push(llrs[v]);
            }
        }
        row_start.push(edges);
        let mut c2v = vec![T::zero(); edges];
        let mut posterior = llrs.to_vec();
        let mut hard = vec![0u8; self.n];
        let limit = T::one() - T::epsilon() * T::of(4.0);
        let half = T::of(0.5);
        let two = T::of(2.0);
        let mut fwd: Vec<T> = Vec::new();
        for iter in 1..=max_iters.max(1) {
            for c in 0..self.checks.len() {
                let (s, e) = (row_start[c], row_start[c + 1]);
                let t: Vec<T> = v2c[s..e].iter().map(|&m| (m * half).tanh()).collect();
                // Leave-one-out products from prefix and suffix products.
                fwd.clear();
                let mut acc = T::one();
                for &x in &t {
                    fwd.push(acc);
                    acc = acc * x;
                }
                let mut back = T::one();
                for i in (0..t.len()).rev() {
                    let p = (fwd[i] * back).max(-limit).min(limit);
                    c2v[s + i] = two * p.atanh();
                    back = back * t[i];
                }
            }
            posterior.copy_from_slice(llrs);
            for (edge, &v) in edge_var.iter().enumerate() {
                posterior[v] = posterior[v] + c2v[edge];
            }
            for (edge, &v) in edge_var.iter().enumerate() {
                v2c[edge] = posterior[v] - c2v[edge];
            }
            for (h, &p) in hard.iter_mut().zip(&posterior) {
                *h = u8::from(p < T::zero());
            }
            if self.syndrome_is_zero(&hard) {
                return DecodeOutcome { info: self.extract_info(&hard), codeword: hard, converged: true, iterations: iter };
            }
        }
        DecodeOutcome { info: self.extract_info(&hard), codeword: hard, converged: false, iterations: max_iters.max(1) }
    }
}

/// Progressive edge growth with a hard row-weight cap. Returns `None` when
/// a variable runs out of eligible checks.
fn peg_graph(n: usize, m: usize, col_weight: usize, row_weight: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<usize>>> {
    let mut checks: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dist = vec![usize::MAX; m];
    let mut var_seen = vec![false; n];
    let mut order: Vec<usize> = (0..m).collect();
    for v in 0..n {
        for _ in 0..col_weight {
            dist.iter_mut().for_each(|d| *d = usize::MAX);
            if !vars[v].is_empty() {
                // BFS over the current graph from v, recording check depths.
                var_seen.iter_mut().for_each(|s| *s = false);
                var_seen[v] = true;
                let mut frontier = vec![v];
                let mut depth = 0;
                while !frontier.is_empty() {
                    let mut next_vars = Vec::new();
                    for &u in &frontier {
                        for &c in &vars[u] {
                            if dist[c] == usize::MAX {
                                dist[c] = depth;
                                for &w in &checks[c] {
                                    if !var_seen[w] {
                                        var_seen[w] = true;
                                        next_vars.push(w);
                                    }
                                }
                            }
                        }
                    }
                    frontier = next_vars;
                    depth += 1;
                }
            }
            let eligible = |c: usize| checks[c].len() < row_weight && !vars[v].contains(&c);
            order.shuffle(rng);
            let unreached = order.iter().copied().filter(|&c| eligible(c) && dist[c] == usize::MAX);
            let chosen = unreached.min_by_key(|&c| checks[c].len()).or_else(|| {
                let far = order.iter().copied().filter(|&c| eligible(c)).map(|c| dist[c]).max()?;
                order
                    .iter()
                    .copied()
                    .filter(|&c| eligible(c) && dist[c] == far)
                    .min_by_key(|&c| checks[c].len())
            })?;
            checks[chosen].push(v);
            vars[v].push(chosen);
        }
    }
    for row in &mut checks {
        row.sort_unstable();
    }
    Some(checks)
}

/// Parses the alist sparse-matrix format (1-based indices, zero padding allowed).
pub fn parse_alist(text: &str) -> Result<LdpcCode, LdpcError> {
    let mut nums = text.split_whitespace().map(|t| t.parse::<usize>().map_err(|_| LdpcError::Alist(format!("bad token {t:?}"))));
    let mut next = || nums.next().unwrap_or(Err(LdpcError::Alist("unexpected end of file".into())));
    let (n, m) = (next()?, next()?);
    let (max_col, max_row) = (next()?, next()?);
    let col_w: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_, _>>()?;
    let row_w: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_, _>>()?;
    let mut cols: Vec<Vec<usize>> = Vec::with_capacity(n);
    for &w in &col_w {
        let mut entries = Vec::new();
        for _ in 0..max_col {
            let x = next()?;
            if x != 0 {
                entries.push(x - 1);
            }
        }
        if entries.len() != w {
            return Err(LdpcError::Alist("column weight disagrees with entries".into()));
        }
        cols.push(entries);
    }
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(m);
    for &w in &row_w {
        let mut entries = Vec::new();
        for _ in 0..max_row {
            let x = next()?;
            if x != 0 {
                entries.push(x - 1);
            }
        }
        if entries.len() != w {
            return Err(LdpcError::Alist("row weight disagrees with entries".into()));
        }
        rows.push(entries);
    }
    for (v, col) in cols.iter().enumerate() {
        for &c in col {
            if c >= m || !rows[c].contains(&v) {
                return Err(LdpcError::Alist(format!("column {} lists row {} inconsistently", v + 1, c + 1)));
            }
        }
    }
    let total_cols: usize = cols.iter().map(Vec::len).sum();
    let total_rows: usize = rows.iter().map(Vec::len).sum();
    if total_cols != total_rows {
        return Err(LdpcError::Alist("row and column entry counts differ".into()));
    }
    LdpcCode::from_checks(n, rows)
}

pub fn to_alist(code: &LdpcCode) -> String {
    let (n, m) = (code.n, code.checks.len());
    let max_col = code.vars.iter().map(Vec::len).max().unwrap_or(0);
    let max_row = code.checks.iter().map(Vec::len).max().unwrap_or(0);
    let join = |v: Vec<usize>| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let padded = |list: &[usize], width: usize| {
        let mut v: Vec<usize> = list.iter().map(|x| x + 1).collect();
        v.resize(width, 0);
        join(v)
    };
    let mut out = format!("{n} {m}\n{max_col} {max_row}\n");
    out += &join(code.vars.iter().map(Vec::len).collect());
    out.push('\n');
    out += &join(code.checks.iter().map(Vec::len).collect());
    out.push('\n');
    for col in &code.vars {
        out += &padded(col, max_col);
        out.push('\n');
    }
    for row in &code.checks {
        out += &padded(row, max_row);
        out.push('\n');
    }
    out
}
