use super::{Family, Task, TaskError};
use crate::refmachine::Word;

/// Largest number of action sequences the brute-force search will visit.
pub const ACTION_SEARCH_LIMIT: u128 = 1 << 24;

/// `R_max(mu, tau)`: the best expected response any behavior can reach.
///
/// Every family has a closed form. Track streams do not react to actions,
/// so replaying the stream scores every step.
pub fn max_achievable_response(task: &Task) -> Result<f64, TaskError> {
    Ok(match task.family() {
        Family::Heaven => 1.0,
        Family::Hell => 0.0,
        Family::Track => 1.0,
    })
}

/// Brute-force `R_max`: scores every sequence of actions (including "no
/// action") and keeps the best. Independent of [`max_achievable_response`].
pub fn max_response_by_action_search(task: &Task) -> Result<f64, TaskError> {
    let tau = task.tau() as usize;
    let choices = task.machine().alphabet() as u128 + 1;
    let total = choices
        .checked_pow(tau as u32)
        .filter(|&n| n <= ACTION_SEARCH_LIMIT)
        .ok_or(TaskError::SearchSpaceTooLarge(
            choices.saturating_pow(tau as u32),
        ))?;
    let mut best = 0.0f64;
    let mut digits = vec![0u128; tau];
    for _ in 0..total {
        let score: f64 = digits
            .iter()
            .enumerate()
            .map(|(t, &d)| {
                let action = if d == 0 { None } else { Some((d - 1) as Word) };
                task.reward(t, action)
            })
            .sum::<f64>()
            / tau as f64;
        best = best.max(score);
        for d in digits.iter_mut() {
            *d += 1;
            if *d < choices {
                break;
            }
            *d = 0;
        }
    }
    Ok(best)
}
