use super::{Kernel, KernelError, KernelState};
use crate::canonical::to_canonical_string;

impl Kernel {
    /// Serializes the full state as canonical JSON (sorted keys), so equal
    /// states give identical bytes.
    pub fn snapshot(&self) -> String {
        to_canonical_string(&self.state)
    }

    pub fn restore(document: &str) -> Result<Kernel, KernelError> {
        let state: KernelState =
            serde_json::from_str(document).map_err(|e| KernelError::Snapshot(e.to_string()))?;
        Ok(Kernel::from_state(state))
    }
}
