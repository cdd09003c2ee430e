use restaurant_core::cstrategy::optimize;
use restaurant_core::game::GameSpec;
use std::time::Instant;

fn main() {
    for g in [
        [0.64694, 0.23368, 0.11938],
        [0.36982, 0.33164, 0.29854],
        [1.0 / 3.0; 3],
    ] {
        let t = Instant::now();
        let o = optimize(&GameSpec::standard(g).unwrap(), 0.02, 3).unwrap();
        println!("{g:?}: {:.6} {:?} in {:?}", o.eps_c, o.sender, t.elapsed());
    }
}
