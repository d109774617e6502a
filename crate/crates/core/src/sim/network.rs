use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EncryptedTrace, NetworkProfile, SimError};

/// Applies network loss to a captured trace.
///
/// With retransmission every record eventually arrives and sizes are
/// unchanged. Without it each record is lost independently; a sub-trace that
/// loses anything is marked truncated.
pub fn perturb_network(
    trace: &EncryptedTrace,
    profile: &NetworkProfile,
    seed: u64,
) -> Result<EncryptedTrace, SimError> {
    profile.validate()?;
    let mut out = trace.clone();
    if profile.retransmit || profile.drop_probability == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sub in &mut out.sub_traces {
        let before = sub.record_sizes.len();
        sub.record_sizes
            .retain(|_| !rng.gen_bool(profile.drop_probability));
        if sub.record_sizes.len() < before {
            sub.truncated = true;
        }
    }
    Ok(out)
}
