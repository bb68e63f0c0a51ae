//! On-disk data model, band-pass filtering and the labeled window stream.

pub mod filter;
pub mod manifest;
pub mod segment;

pub use filter::{bandpass, Bandpass};
pub use manifest::{load_session, read_manifest, write_session, ClassRole, Event, SessionManifest};
pub use segment::{frame_count, label_frames, segment, FrameLabel, Segments, TrueState, WindowConfig, WindowFrame};
