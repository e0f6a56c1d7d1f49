//! Expert/random dataset mixing and uniform transition discarding.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{streams, stream_rng};

use super::{Dataset, Provenance, Transition};

/// Recipe for a mixed, optionally reduced dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureRecipe {
    /// Fraction of the combined dataset drawn from the expert pool.
    pub expert_ratio: f64,
    /// Combined size before discarding.
    pub total_size: usize,
    /// Fraction of transitions dropped uniformly at random afterwards.
    pub discard_ratio: f64,
}

impl MixtureRecipe {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.expert_ratio) {
            return Err(Error::invalid("expert_ratio must be in [0,1]"));
        }
        if !(0.0..1.0).contains(&self.discard_ratio) {
            return Err(Error::invalid("discard_ratio must be in [0,1)"));
        }
        if self.kept_size() < 1 {
            return Err(Error::invalid(
                "recipe yields an empty dataset after discarding",
            ));
        }
        Ok(())
    }

    /// Final dataset size: `round(total_size * (1 - discard_ratio))`.
    pub fn kept_size(&self) -> usize {
        (self.total_size as f64 * (1.0 - self.discard_ratio)).round() as usize
    }
}

/// Draw `round(ratio * n)` transitions from the expert pool and the rest from
/// the random pool (without replacement when the pool suffices, with
/// replacement otherwise, recorded in provenance), shuffle, then discard
/// uniformly at random down to `kept_size`.
pub fn mix_datasets(
    expert: &Dataset,
    random: &Dataset,
    recipe: &MixtureRecipe,
    seed: u64,
) -> Result<Dataset> {
    recipe.validate()?;
    if expert.env_tag != random.env_tag {
        return Err(Error::invalid(format!(
            "cannot mix datasets from different environments ({} vs {})",
            expert.env_tag, random.env_tag
        )));
    }
    let mut rng = stream_rng(seed, streams::MIXTURE);
    let n_expert = (recipe.expert_ratio * recipe.total_size as f64).round() as usize;
    let n_random = recipe.total_size - n_expert;

    let (expert_rows, expert_with_replacement) = draw(expert, n_expert, &mut rng);
    let (random_rows, random_with_replacement) = draw(random, n_random, &mut rng);

    let mut combined: Vec<Transition> = expert_rows
        .into_iter()
        .map(|i| expert.transition(i))
        .chain(random_rows.into_iter().map(|i| random.transition(i)))
        .collect();
    combined.shuffle(&mut rng);

    let keep = recipe.kept_size();
    if keep < combined.len() {
        // Uniform discard: shuffle already randomized order, truncate.
        combined.truncate(keep);
    }

    Dataset::from_transitions(
        &expert.env_tag,
        &combined,
        Provenance {
            source: "mixture".to_string(),
            seed,
            policy: None,
            expert_ratio: Some(recipe.expert_ratio),
            discard_ratio: Some(recipe.discard_ratio),
            expert_with_replacement,
            random_with_replacement,
        },
    )
}

/// Sample `count` indices from the pool, without replacement when possible.
fn draw<R: Rng + ?Sized>(pool: &Dataset, count: usize, rng: &mut R) -> (Vec<usize>, bool) {
    if count == 0 {
        return (Vec::new(), false);
    }
    if count <= pool.len() {
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.shuffle(rng);
        idx.truncate(count);
        (idx, false)
    } else {
        let idx = (0..count).map(|_| rng.gen_range(0..pool.len())).collect();
        (idx, true)
    }
}
