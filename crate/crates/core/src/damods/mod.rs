//! Adaptation modules, their discriminators and the loss algebra.

mod discriminator;
mod modules;

pub use discriminator::{discriminator_forward, Discriminator, DiscriminatorConfig, LEAKY_SLOPE};
pub use modules::{
    adversarial_losses, build_discriminators, combine_total_loss, default_loss_weights, discriminator_channels,
    discriminator_input, discriminator_input_size, fcdam_entropy_loss, module_losses, rcdam_two_stage,
    AdversarialLosses, LossWeights, ModuleConfig, ModuleEntry, ModuleKind, ModuleLambdas, ModuleLosses, Placement,
    RegionPasses, Supervision, TotalLoss,
};
