//! The two-view objective shared by training and parameter-space curvature.

use crate::autodiff::{DiffMap, Tape, Var};
use crate::error::{Error, Result};
use crate::losses::PairLoss;
use crate::models::{Block, Pipeline};
use crate::tensor::Tensor;

/// Tape handles for every parameter tensor of a pipeline, block by block.
#[derive(Clone, Debug)]
pub struct PipelineVars {
    pub backbone: Vec<Var>,
    pub head: Vec<Var>,
    pub predictor: Vec<Var>,
}

impl PipelineVars {
    pub fn leaves(tape: &mut Tape, p: &Pipeline) -> Self {
        let mut rec = |b: Option<&Block>| -> Vec<Var> {
            b.map(|b| b.params.tensors().map(|t| tape.leaf(t.clone())).collect())
                .unwrap_or_default()
        };
        PipelineVars {
            backbone: rec(Some(&p.backbone)),
            head: rec(Some(&p.head)),
            predictor: rec(p.predictor.as_ref()),
        }
    }

    /// Handles taken from an existing list in backbone, head, predictor order.
    pub fn split(p: &Pipeline, all: &[Var]) -> Result<Self> {
        let nb = p.backbone.params.len();
        let nh = p.head.params.len();
        let np = p.predictor.as_ref().map_or(0, |b| b.params.len());
        if all.len() != nb + nh + np {
            return Err(Error::invalid("parameter handle count does not match pipeline"));
        }
        Ok(PipelineVars {
            backbone: all[..nb].to_vec(),
            head: all[nb..nb + nh].to_vec(),
            predictor: all[nb + nh..].to_vec(),
        })
    }

    pub fn all(&self) -> Vec<Var> {
        self.backbone
            .iter()
            .chain(&self.head)
            .chain(&self.predictor)
            .copied()
            .collect()
    }
}

/// Pipeline tensors in the same order as [`PipelineVars::all`].
pub fn pipeline_tensors(p: &Pipeline) -> Vec<Tensor> {
    p.blocks().flat_map(|b| b.params.tensors().cloned()).collect()
}

/// Writes a flat list of tensors back into the pipeline.
pub fn assign_pipeline_tensors(p: &mut Pipeline, tensors: &[Tensor]) -> Result<()> {
    let mut it = tensors.iter();
    let blocks = [Some(&mut p.backbone), Some(&mut p.head), p.predictor.as_mut()];
    for b in blocks.into_iter().flatten() {
        let names: Vec<String> = b.params.names().map(str::to_string).collect();
        for n in names {
            let t = it.next().ok_or_else(|| Error::invalid("too few tensors for pipeline"))?;
            b.params.set(&n, t.clone())?;
        }
    }
    if it.next().is_some() {
        return Err(Error::invalid("too many tensors for pipeline"));
    }
    Ok(())
}

/// Values recorded by [`record_objective`].
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveVars {
    pub loss: Var,
    pub backbone: [Var; 2],
    pub head: [Var; 2],
}

/// Both views through backbone and head. Without a predictor the loss is
/// `L(h₁, h₂)`. With one it is `L(p(h₁), sg(h₂))`, averaged with the
/// swapped term when `symmetric`.
pub fn record_objective(
    tape: &mut Tape,
    pipeline: &Pipeline,
    vars: &PipelineVars,
    views: [Var; 2],
    loss: &dyn PairLoss,
    symmetric: bool,
) -> Result<ObjectiveVars> {
    let z1 = pipeline.backbone.net.record(tape, &vars.backbone, views[0])?;
    let z2 = pipeline.backbone.net.record(tape, &vars.backbone, views[1])?;
    let h1 = pipeline.head.net.record(tape, &vars.head, z1)?;
    let h2 = pipeline.head.net.record(tape, &vars.head, z2)?;
    let l = match &pipeline.predictor {
        None => loss.build(tape, h1, h2)?,
        Some(pred) => {
            let p1 = pred.net.record(tape, &vars.predictor, h1)?;
            let t2 = tape.stop_gradient(h2);
            let a = loss.build(tape, p1, t2)?;
            if symmetric {
                let p2 = pred.net.record(tape, &vars.predictor, h2)?;
                let t1 = tape.stop_gradient(h1);
                let b = loss.build(tape, p2, t1)?;
                let s = tape.add(a, b)?;
                tape.scale(s, 0.5)
            } else {
                a
            }
        }
    };
    Ok(ObjectiveVars {
        loss: l,
        backbone: [z1, z2],
        head: [h1, h2],
    })
}

/// A loss of the head output that first passes it through a frozen
/// predictor, with the partner held constant.
pub struct ThroughPredictor<'a, L: ?Sized> {
    pub predictor: &'a Block,
    pub loss: &'a L,
}

impl<L: PairLoss + ?Sized> PairLoss for ThroughPredictor<'_, L> {
    fn build(&self, tape: &mut Tape, u: Var, v: Var) -> Result<Var> {
        let p = self.predictor.apply(tape, u)?;
        let t = tape.stop_gradient(v);
        self.loss.build(tape, p, t)
    }
}
