use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DialogueSession;
use crate::error::{Error, Result};

/// Builds the multi-domain variant of a split.
///
/// Sessions are visited in a seeded shuffled order. Each still-unused
/// session `a` draws a random unused partner `b` whose domains are disjoint
/// from its own; with probability `prob` the two become one session (turns
/// of `a` followed by turns of `b`, domains of both), otherwise both are
/// kept as they are. Every source session is used once. Output order
/// follows the smallest source index of each output session, so `prob = 0`
/// returns the input unchanged.
pub fn build_kvret_star(sessions: &[DialogueSession], prob: f64, seed: u64) -> Result<Vec<DialogueSession>> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::invalid(format!(
            "recombination probability {prob} not in [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..sessions.len()).collect();
    order.shuffle(&mut rng);

    let disjoint = |a: &DialogueSession, b: &DialogueSession| !a.domains.iter().any(|d| b.domains.contains(d));
    let mut used = vec![false; sessions.len()];
    // (first source index, session)
    let mut out: Vec<(usize, DialogueSession)> = Vec::with_capacity(sessions.len());

    for &a in &order {
        if used[a] {
            continue;
        }
        used[a] = true;
        let partners: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&b| !used[b] && disjoint(&sessions[a], &sessions[b]))
            .collect();
        let Some(&b) = partners.choose(&mut rng) else {
            out.push((a, sessions[a].clone()));
            continue;
        };
        used[b] = true;
        if rng.gen::<f64>() < prob {
            let (sa, sb) = (&sessions[a], &sessions[b]);
            let mut domains = sa.domains.clone();
            domains.extend(sb.domains.iter().cloned());
            let mut turns = sa.turns.clone();
            turns.extend(sb.turns.iter().cloned());
            out.push((
                a.min(b),
                DialogueSession {
                    id: format!("{}+{}", sa.id, sb.id),
                    domains,
                    turns,
                },
            ));
        } else {
            out.push((a, sessions[a].clone()));
            out.push((b, sessions[b].clone()));
        }
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, s)| s).collect())
}
