use dcs_harness::image::*;
use dcs_harness::Error;
use proptest::prelude::*;

fn p5(cols: usize, rows: usize, px: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(px);
    out
}

#[test]
fn binary_128_square_scales_to_unit_interval() {
    let px: Vec<u8> = (0..128 * 128).map(|i| (i * 7 % 256) as u8).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.pgm");
    std::fs::write(&path, p5(128, 128, &px)).unwrap();
    let g = load_image(&path).unwrap();
    assert_eq!((g.rows, g.cols), (128, 128));
    assert!(g.data.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(g.get(0, 1), 7.0 / 255.0);
    assert_eq!(g.data.iter().cloned().fold(0.0, f64::max), 1.0);
}

#[test]
fn ascii_with_comments_matches_binary() {
    let px: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
    let ascii = "P2\n# made by hand\n4 3 # w h\n255\n0 20 40 60\n80 100 120 140\n160 180 200 220\n";
    assert_eq!(decode_pgm(ascii.as_bytes()).unwrap(), decode_pgm(&p5(4, 3, &px)).unwrap());
}

#[test]
fn sixteen_bit_samples_are_big_endian() {
    let mut bytes = b"P5 2 1 1000\n".to_vec();
    bytes.extend_from_slice(&[0x01, 0xf4, 0x03, 0xe8]);
    assert_eq!(decode_pgm(&bytes).unwrap().data, vec![0.5, 1.0]);
}

#[test]
fn truncated_raster_names_the_offset() {
    let bytes = p5(4, 4, &[9; 10]);
    let header = "P5\n4 4\n255\n".len();
    match decode_pgm(&bytes) {
        Err(Error::Pgm { offset, message }) => {
            assert_eq!(offset, header + 10);
            assert!(message.contains("truncated"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    match decode_pgm(b"P2\n2 2\n255\n1 2 3") {
        Err(Error::Pgm { offset, .. }) => assert_eq!(offset, 16),
        other => panic!("{other:?}"),
    }
    let e = decode_pgm(b"P5\n4").unwrap_err();
    assert!(e.to_string().contains("byte 4"), "{e}");
}

#[test]
fn malformed_headers_are_errors() {
    for bad in [&b"P6\n1 1\n255\n\0"[..], b"P5\n0 1\n255\n", b"P5\n1 1\n70000\n\0", b"P5\n1 x\n255\n", b"P5", b"P2\n1 1\n3\n4\n"] {
        assert!(matches!(decode_pgm(bad), Err(Error::Pgm { .. })), "{:?}", String::from_utf8_lossy(bad));
    }
}

#[test]
fn non_square_and_non_dyadic_images_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let wide = dir.path().join("wide.pgm");
    std::fs::write(&wide, p5(8, 4, &[0; 32])).unwrap();
    assert!(matches!(load_image(&wide), Err(Error::Image(_))));
    let odd = dir.path().join("odd.pgm");
    std::fs::write(&odd, p5(12, 12, &[0; 144])).unwrap();
    assert!(matches!(load_image(&odd), Err(Error::Image(_))));
    assert!(matches!(load_image(&dir.path().join("missing.pgm")), Err(Error::Io { .. })));
}

#[test]
fn sixteen_blocks_of_thirty_two() {
    let g = Grid::new(128, 128, (0..128 * 128).map(|i| i as f64).collect()).unwrap();
    let tiles = block_split(&g, 32).unwrap();
    assert_eq!(tiles.len(), 16);
    // second tile in the first tile row starts at column 32
    assert_eq!(tiles[1].data[0], 32.0);
    assert_eq!(tiles[4].data[0], (32 * 128) as f64);
    assert_eq!(block_join(&tiles, 128, 128).unwrap(), g);
}

#[test]
fn indivisible_blocks_are_errors() {
    let g = Grid::new(100, 100, vec![0.0; 10_000]).unwrap();
    assert!(block_split(&g, 32).is_err());
    assert!(block_split(&g, 0).is_err());
    let tiles = block_split(&Grid::new(64, 64, vec![0.0; 4096]).unwrap(), 32).unwrap();
    assert!(block_join(&tiles, 64, 96).is_err());
    assert!(block_join(&[], 64, 64).is_err());
}

proptest! {
    #[test]
    fn eight_bit_round_trip(cols in 1usize..20, rows in 1usize..20, seed in any::<u64>()) {
        let px: Vec<u8> = (0..cols * rows).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
        let g = decode_pgm(&p5(cols, rows, &px)).unwrap();
        prop_assert_eq!(encode_p5(&g), p5(cols, rows, &px));
        prop_assert_eq!(decode_pgm(&encode_p5(&g)).unwrap(), g.clone());
        prop_assert_eq!(decode_pgm(encode_p2(&g).as_bytes()).unwrap(), g);
    }

    #[test]
    fn join_inverts_split(shift in 0u32..3, block_pow in 0u32..4, seed in any::<u64>()) {
        let block = 1usize << block_pow;
        let (rows, cols) = (block << shift, block << (2 - shift));
        let g = Grid::new(rows, cols, (0..rows * cols).map(|i| (seed ^ i as u64) as f64).collect()).unwrap();
        let tiles = block_split(&g, block).unwrap();
        prop_assert_eq!(tiles.len(), (rows / block) * (cols / block));
        prop_assert_eq!(block_join(&tiles, rows, cols).unwrap(), g);
    }

    #[test]
    fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let mut input = b"P5 3 2 255\n".to_vec();
        input.extend(bytes.iter().copied());
        let _ = decode_pgm(&input);
        let _ = decode_pgm(&bytes);
    }
}
