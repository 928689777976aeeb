//! Distributional critic targets and losses, kept as pure `f64` functions so
//! they can be exercised independently of the networks.

/// Truncated soft Bellman targets.
///
/// `pooled` is row-major `[batch, pool]`: every target critic's atoms at the
/// next state and a fresh policy action. Each row is sorted ascending, the
/// `drop` largest atoms are discarded, and the survivors are mapped through
/// `r + gamma * (1 - done) * (atom - alpha * log_pi)`. Terminal rows
/// therefore collapse to the reward exactly. Returns `[batch, pool - drop]`.
#[allow(clippy::too_many_arguments)]
pub fn target_distribution(
    pooled: &[f64],
    batch: usize,
    drop: usize,
    rewards: &[f64],
    dones: &[bool],
    log_probs: &[f64],
    alpha: f64,
    gamma: f64,
) -> Vec<f64> {
    let pool = pooled.len().checked_div(batch).unwrap_or(0);
    assert_eq!(pooled.len(), batch * pool, "pooled atoms must be rectangular");
    assert!(drop < pool, "truncation must keep at least one atom");
    assert_eq!(rewards.len(), batch);
    assert_eq!(dones.len(), batch);
    assert_eq!(log_probs.len(), batch);

    let kept = pool - drop;
    let mut out = Vec::with_capacity(batch * kept);
    let mut row = Vec::with_capacity(pool);
    for b in 0..batch {
        row.clear();
        row.extend_from_slice(&pooled[b * pool..(b + 1) * pool]);
        row.sort_by(f64::total_cmp);
        let scale = gamma * if dones[b] { 0.0 } else { 1.0 };
        let entropy = alpha * log_probs[b];
        out.extend(
            row[..kept]
                .iter()
                .map(|&atom| rewards[b] + scale * (atom - entropy)),
        );
    }
    out
}

/// Asymmetric Huber quantile regression loss with `kappa = 1`.
///
/// `atoms` is row-major `[batch, m]` with atom `j` representing the quantile
/// fraction `(2j + 1) / (2m)`; `targets` is row-major `[batch, k]`. Every
/// atom is paired with every target of its row. Returns the mean over batch,
/// atoms, and targets together with the gradient with respect to each atom.
pub fn quantile_huber(
    atoms: &[f64],
    batch: usize,
    m: usize,
    targets: &[f64],
) -> (f64, Vec<f64>) {
    assert_eq!(atoms.len(), batch * m);
    assert!(batch > 0 && m > 0, "empty quantile batch");
    assert_eq!(targets.len() % batch, 0, "targets must be rectangular");
    let k = targets.len() / batch;
    assert!(k > 0, "each row needs at least one target");

    let norm = 1.0 / (batch * m * k) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; atoms.len()];
    for b in 0..batch {
        for j in 0..m {
            let theta = atoms[b * m + j];
            let tau = (2 * j + 1) as f64 / (2 * m) as f64;
            let mut l = 0.0;
            let mut g = 0.0;
            for &y in &targets[b * k..(b + 1) * k] {
                let u = y - theta;
                let weight = if u < 0.0 { 1.0 - tau } else { tau };
                let huber = if u.abs() <= 1.0 {
                    0.5 * u * u
                } else {
                    u.abs() - 0.5
                };
                l += weight * huber;
                g -= weight * u.clamp(-1.0, 1.0);
            }
            loss += l * norm;
            grad[b * m + j] = g * norm;
        }
    }
    (loss, grad)
}

/// Actor objective: mean over the batch of
/// `alpha * log_pi - mean over every pooled online atom`.
pub fn actor_objective(
    q_atoms: &[f64],
    batch: usize,
    pool: usize,
    log_probs: &[f64],
    alpha: f64,
) -> f64 {
    assert_eq!(q_atoms.len(), batch * pool);
    assert_eq!(log_probs.len(), batch);
    let mut total = 0.0;
    for b in 0..batch {
        let q: f64 = q_atoms[b * pool..(b + 1) * pool].iter().sum::<f64>() / pool as f64;
        total += alpha * log_probs[b] - q;
    }
    total / batch as f64
}

/// Temperature objective `-log_alpha * mean(log_pi + entropy_target)` and
/// its gradient with respect to `log_alpha`. Entropy above the target makes
/// the gradient positive, so gradient descent shrinks `alpha`.
pub fn alpha_objective(
    log_alpha: f64,
    log_probs: &[f64],
    entropy_target: f64,
) -> (f64, f64) {
    assert!(!log_probs.is_empty());
    let gap: f64 =
        log_probs.iter().map(|&lp| lp + entropy_target).sum::<f64>() / log_probs.len() as f64;
    (-log_alpha * gap, -gap)
}
