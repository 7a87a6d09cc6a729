//! Logit mode choice and how expected waits feed back into it.

use saev::demand::{update_expectations, ChoiceModel, WaitObservation};

fn main() {
    let mut model = ChoiceModel::new(1);
    for wait in [0.0, 5.0, 10.0, 20.0] {
        let p = model.p_saev_given(8.0, 15.0, 1.0, wait);
        println!("8 km trip, expected wait {wait:>4} min: P(SAEV) = {p:.4}");
    }

    // A cell that alternates between quiet and busy days settles near the mean.
    for day in 0..20 {
        let wait_min = if day % 2 == 0 { 0.0 } else { 10.0 };
        let obs = [WaitObservation { cell: 0, hour: 8, wait_min }];
        update_expectations(&mut model.expected, &obs, day);
    }
    println!("expected 8h wait after 20 days: {:.3} min", model.expected.get(0, 8));
}
