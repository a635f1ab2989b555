/// Squared error between a relation score and the same-class indicator.
pub fn mse_pair_loss(r: f64, same_class: bool) -> f64 {
    let d = r - if same_class { 1.0 } else { 0.0 };
    d * d
}

/// dJ/dr of [`mse_pair_loss`].
pub fn mse_pair_loss_grad(r: f64, same_class: bool) -> f64 {
    2.0 * (r - if same_class { 1.0 } else { 0.0 })
}
