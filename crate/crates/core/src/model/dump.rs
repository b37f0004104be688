use std::fmt::Write;

use super::{ForwardOptions, Model, ModelError};
use crate::data::WindowSample;
use crate::numerics::{Tape, Tensor};

pub const EMBEDDING_DUMP_STAGES: [&str; 2] = ["pre_align", "post_align"];

/// Patch embeddings of one window before and after the graph update, as
/// CSV with columns `variable,patch,stage,dim_0..`.
pub fn embedding_dump_csv(model: &Model, window: &WindowSample, texts: &[Tensor]) -> Result<String, ModelError> {
    let mut tape = Tape::new();
    let vars = model.bind_constants(&mut tape);
    let out = model.forward(
        &mut tape,
        &vars,
        std::slice::from_ref(window),
        &[texts.to_vec()],
        ForwardOptions {
            graphs: None,
            trace: true,
        },
    )?;
    let trace = out.trace.expect("trace requested");
    let c = model.config();
    let (p, d) = (c.num_patches(), c.d_model);

    let mut s = String::from("variable,patch,stage");
    for k in 0..d {
        write!(s, ",dim_{k}").expect("write to string");
    }
    s.push('\n');
    for (stage, values) in EMBEDDING_DUMP_STAGES.iter().zip([&trace.pre_align, &trace.post_align]) {
        for n in 0..c.num_vars {
            for i in 0..p {
                write!(s, "{n},{i},{stage}").expect("write to string");
                for v in values.row(n * p + i) {
                    write!(s, ",{v}").expect("write to string");
                }
                s.push('\n');
            }
        }
    }
    Ok(s)
}
