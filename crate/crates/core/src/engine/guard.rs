//! Marks code running in the audio context.
//!
//! `Engine::process_block` enters the context for its whole duration. A
//! debugging global allocator (see the `no_alloc` integration test) can call
//! [`in_audio_context`] to detect allocations made on the audio path.

use std::cell::Cell;

thread_local! {
    static DEPTH: Cell<u32> = const { Cell::new(0) };
}

/// True while the current thread is inside the audio context.
pub fn in_audio_context() -> bool {
    DEPTH.try_with(|d| d.get() > 0).unwrap_or(false)
}

/// RAII marker for the audio context.
#[must_use]
pub struct AudioContext(());

impl AudioContext {
    pub fn enter() -> Self {
        let _ = DEPTH.try_with(|d| d.set(d.get() + 1));
        AudioContext(())
    }
}

impl Drop for AudioContext {
    fn drop(&mut self) {
        let _ = DEPTH.try_with(|d| d.set(d.get().saturating_sub(1)));
    }
}
