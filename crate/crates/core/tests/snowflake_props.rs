use leakaudit::snowflake::{decode_timestamp, prefix_digits};
use leakaudit::synth::compose_id;
use proptest::prelude::*;
use rand::Rng;

const EPOCH: i64 = 1_288_834_974_657;

#[test]
fn first_tick() {
    assert_eq!(decode_timestamp(&(1u64 << 22).to_string()).unwrap(), EPOCH + 1);
}

#[test]
fn decode_is_monotone_over_random_ids() {
    let mut rng = leakaudit::rng::seeded(10);
    // snowflake era up to 2030
    let hi = ((1_893_456_000_000 - EPOCH) as u64) << 22;
    let mut ids: Vec<u64> = (0..100_000).map(|_| rng.gen_range(1u64 << 22..hi)).collect();
    ids.sort_unstable();
    let ts: Vec<i64> = ids.iter().map(|i| decode_timestamp(&i.to_string()).unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] <= w[1]));
}

proptest! {
    #[test]
    fn low_bits_do_not_move_time(ms in 1i64..2_500_000_000_000, low in 0u64..(1 << 22)) {
        let base = (ms as u64) << 22;
        prop_assert_eq!(
            decode_timestamp(&base.to_string()).unwrap(),
            decode_timestamp(&(base | low).to_string()).unwrap()
        );
    }

    #[test]
    fn compose_round_trips(ts in EPOCH + 1..EPOCH + 2_500_000_000_000, w in 0u64..1024, s in 0u64..4096) {
        prop_assert_eq!(decode_timestamp(&compose_id(ts, w, s)).unwrap(), ts);
    }

    #[test]
    fn prefix_is_leading_digits(id in 1u64 << 40..u64::MAX >> 1, k in 1usize..6) {
        let s = id.to_string();
        let p = prefix_digits(&s, k).unwrap();
        let want: Vec<u8> = s.bytes().take(k).map(|b| b - b'0').collect();
        prop_assert_eq!(p.digits(), &want[..]);
    }
}
