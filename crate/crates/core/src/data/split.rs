use super::sample::{FederatedSplit, UserDataset};
use crate::error::{config, Result};
use crate::numkernel::Rng;

/// Number of users held out: `round(test_frac * n)`, at least one, leaving at
/// least one client.
pub fn test_user_count(n_users: usize, test_frac: f64) -> usize {
    ((test_frac * n_users as f64).round() as usize).clamp(1, n_users.saturating_sub(1).max(1))
}

/// Holds out whole users. Both sides keep the input order.
pub fn user_independent_split(
    users: Vec<UserDataset>,
    test_frac: f64,
    rng: &mut Rng,
) -> Result<FederatedSplit> {
    if users.len() < 2 {
        return Err(config(format!(
            "a user-independent split needs at least 2 users, got {}",
            users.len()
        )));
    }
    if !(0.0..1.0).contains(&test_frac) {
        return Err(config(format!("test fraction {test_frac} outside [0, 1)")));
    }
    let n_test = test_user_count(users.len(), test_frac);
    let mut order: Vec<usize> = (0..users.len()).collect();
    rng.shuffle(&mut order);
    let mut is_test = vec![false; users.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (test_users, train_clients): (Vec<_>, Vec<_>) = users
        .into_iter()
        .zip(is_test)
        .partition(|(_, t)| *t);
    Ok(FederatedSplit {
        train_clients: train_clients.into_iter().map(|(u, _)| u).collect(),
        test_users: test_users.into_iter().map(|(u, _)| u).collect(),
    })
}

/// Shuffles user indices and deals them round-robin into `k` folds.
pub fn kfold_user_folds(n_users: usize, k: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if k == 0 || n_users < k {
        return Err(config(format!("{n_users} users cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n_users).collect();
    rng.shuffle(&mut order);
    let mut folds = vec![Vec::with_capacity(n_users / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}
