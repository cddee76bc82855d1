use std::sync::{Arc, Mutex, RwLock};

use super::GallerySnapshot;

/// Publishes immutable snapshots to readers; writers serialize on one lock.
#[derive(Debug, Default)]
pub struct IndexStore {
    current: RwLock<Arc<GallerySnapshot>>,
    writer: Mutex<()>,
}

impl IndexStore {
    pub fn new(snap: GallerySnapshot) -> Self {
        Self {
            current: RwLock::new(Arc::new(snap)),
            writer: Mutex::new(()),
        }
    }

    /// The snapshot current at call time.
    pub fn snapshot(&self) -> Arc<GallerySnapshot> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    /// Applies `f` to the current snapshot and publishes the result. Readers
    /// keep whatever snapshot they already hold.
    pub fn mutate<E>(
        &self,
        f: impl FnOnce(&GallerySnapshot) -> Result<GallerySnapshot, E>,
    ) -> Result<Arc<GallerySnapshot>, E> {
        let _guard = self.writer.lock().expect("writer lock poisoned");
        let base = self.snapshot();
        let next = Arc::new(f(&base)?);
        *self.current.write().expect("snapshot lock poisoned") = next.clone();
        Ok(next)
    }
}
