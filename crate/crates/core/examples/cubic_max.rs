//! Maximum of a cubic form on the unit circle and its first-order conditions.

use kelab::geometry::Tensor;
use kelab::identities::cubic_max;

fn main() {
    // components T_111, T_112, T_122, T_222
    let coeffs = [0.8, -0.3, 0.5, 0.2];
    let t = Tensor::from_fn(2, 3, |idx| coeffs[idx.iter().filter(|&&i| i == 1).count()]);
    let m = cubic_max(&t);
    println!("maximizer v = ({:.12}, {:.12})", m.v[0], m.v[1]);
    println!("T(v, v, v) = {:.15}", m.value);
    println!("T(a, v, v) = {:.2e}", m.first_order);
    println!("T(v, v, v) − 2T(v, a, a) = {:.12}", m.margin);
    println!("gap to the next local maximum = {:.2e}", m.gap);
}
