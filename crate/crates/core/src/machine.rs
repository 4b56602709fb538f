//! Resumable step machines over the register layer.
//!
//! Every snapshot operation is written once, as a small state machine whose
//! yield points are exactly the shared-register primitives. The explorer
//! advances a machine one primitive at a time (one schedulable step per
//! access); the native handles drive the same machine in a tight loop. Local
//! computation between primitives is free, matching the way step complexity
//! is counted: only shared accesses matter.

use crate::shmem::{ComponentCell, Payload, ProcessId, RegisterId, RegisterOps, Value};

/// One shared-register access requested by a machine.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Effect {
    Read(RegisterId),
    Write(RegisterId, Payload),
    Ll(RegisterId),
    Sc(RegisterId, Payload),
}

impl Effect {
    pub fn register(&self) -> RegisterId {
        match self {
            Effect::Read(r) | Effect::Write(r, _) | Effect::Ll(r) | Effect::Sc(r, _) => *r,
        }
    }
}

/// The reply a machine receives for its last effect.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Reply {
    Payload(Payload),
    Flag(bool),
    Unit,
}

impl Reply {
    fn payload(self) -> Payload {
        match self {
            Reply::Payload(p) => p,
            other => panic!("expected payload reply, got {other:?}"),
        }
    }

    fn flag(self) -> bool {
        match self {
            Reply::Flag(f) => f,
            other => panic!("expected flag reply, got {other:?}"),
        }
    }
}

/// What a completed operation hands back.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum OpOutput {
    Unit,
    View(Vec<Option<Value>>),
    Entries(Vec<(usize, Option<Value>)>),
}

/// Result of advancing a machine.
#[derive(Clone, Debug)]
pub enum MachineStep {
    /// The machine wants this access performed; feed the reply to `next`.
    Access(Effect),
    Done(OpOutput),
}

/// A resumable operation. The first call passes `None`; every later call
/// passes the reply to the previously yielded effect.
pub trait Machine {
    fn next(&mut self, reply: Option<Reply>) -> MachineStep;
}

/// A machine that can be rewound and run again from its initial state.
pub trait Subroutine: Machine {
    fn restart(&mut self);
}

/// Execute one effect against a register file.
pub fn execute<F: RegisterOps>(file: &F, process: ProcessId, effect: Effect) -> Reply {
    match effect {
        Effect::Read(r) => Reply::Payload(file.read(process, r)),
        Effect::Write(r, v) => {
            file.write(process, r, v);
            Reply::Unit
        }
        Effect::Ll(r) => Reply::Payload(file.ll(process, r)),
        Effect::Sc(r, v) => Reply::Flag(file.sc(process, r, v)),
    }
}

/// Drive a machine to completion. Returns the output and the number of
/// shared accesses performed.
pub fn run_op<F: RegisterOps>(file: &F, process: ProcessId, machine: &mut impl Machine) -> (OpOutput, u64) {
    let mut accesses = 0u64;
    let mut reply = None;
    loop {
        match machine.next(reply.take()) {
            MachineStep::Access(effect) => {
                accesses += 1;
                reply = Some(execute(file, process, effect));
            }
            MachineStep::Done(output) => return (output, accesses),
        }
    }
}

/// The announce loop shared by both snapshot objects: at most two attempts
/// of {LL the component; propose the value if the slot is free; on a won SC
/// help and stop, otherwise help and retry once}.
#[derive(Clone, Debug)]
pub struct UpdateMachine<A> {
    values_reg: RegisterId,
    value: Value,
    attempt: u8,
    apply: A,
    pc: UpdatePc,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum UpdatePc {
    Start,
    AwaitAnnounceLl,
    AwaitAnnounceSc,
    InApply { won: bool },
    Finished,
}

impl<A: Subroutine> UpdateMachine<A> {
    pub fn new(values_reg: RegisterId, value: Value, apply: A) -> Self {
        Self { values_reg, value, attempt: 0, apply, pc: UpdatePc::Start }
    }

    fn enter_apply(&mut self, won: bool) -> MachineStep {
        self.apply.restart();
        self.pc = UpdatePc::InApply { won };
        match self.apply.next(None) {
            MachineStep::Access(e) => MachineStep::Access(e),
            MachineStep::Done(_) => unreachable!("apply_update always touches shared memory"),
        }
    }
}

impl<A: Subroutine> Machine for UpdateMachine<A> {
    fn next(&mut self, reply: Option<Reply>) -> MachineStep {
        match self.pc {
            UpdatePc::Start => {
                self.pc = UpdatePc::AwaitAnnounceLl;
                MachineStep::Access(Effect::Ll(self.values_reg))
            }
            UpdatePc::AwaitAnnounceLl => {
                let cur = reply.expect("reply").payload().as_component();
                if cur.proposed.is_none() {
                    let up = ComponentCell { proposed: Some(self.value), ..cur };
                    self.pc = UpdatePc::AwaitAnnounceSc;
                    MachineStep::Access(Effect::Sc(self.values_reg, Payload::Component(up)))
                } else {
                    self.enter_apply(false)
                }
            }
            UpdatePc::AwaitAnnounceSc => {
                let won = reply.expect("reply").flag();
                self.enter_apply(won)
            }
            UpdatePc::InApply { won } => match self.apply.next(reply) {
                MachineStep::Access(e) => MachineStep::Access(e),
                MachineStep::Done(_) => {
                    self.attempt += 1;
                    if won || self.attempt >= 2 {
                        self.pc = UpdatePc::Finished;
                        MachineStep::Done(OpOutput::Unit)
                    } else {
                        self.pc = UpdatePc::AwaitAnnounceLl;
                        MachineStep::Access(Effect::Ll(self.values_reg))
                    }
                }
            },
            UpdatePc::Finished => panic!("machine already finished"),
        }
    }
}
