pub mod compiler;
pub mod experiments;
pub mod interp;
pub mod logic;
pub mod oracle;
pub mod semantics;
pub mod tensor;
pub mod trainer;
