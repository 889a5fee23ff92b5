//! Reference Keccak-256: state as a 5x5 lane array indexed `[x][y]`, round
//! constants from the degree-8 LFSR, rotation offsets from the (x, y) walk.

fn lfsr(r: &mut u8) -> bool {
    let out = *r & 1 == 1;
    *r = if *r & 0x80 != 0 { (*r << 1) ^ 0x71 } else { *r << 1 };
    out
}

fn round_constants() -> [u64; 24] {
    let mut rc = [0u64; 24];
    let mut r = 1u8;
    for c in rc.iter_mut() {
        for j in 0..7 {
            if lfsr(&mut r) {
                *c |= 1u64 << ((1 << j) - 1);
            }
        }
    }
    rc
}

fn rotations() -> [[u32; 5]; 5] {
    let mut rot = [[0u32; 5]; 5];
    let (mut x, mut y) = (1usize, 0usize);
    for t in 0..24u32 {
        rot[x][y] = ((t + 1) * (t + 2) / 2) % 64;
        let nx = y;
        let ny = (2 * x + 3 * y) % 5;
        x = nx;
        y = ny;
    }
    rot
}

fn permute(a: &mut [[u64; 5]; 5]) {
    let rc = round_constants();
    let rot = rotations();
    for c in rc {
        let mut col = [0u64; 5];
        for x in 0..5 {
            col[x] = a[x][0] ^ a[x][1] ^ a[x][2] ^ a[x][3] ^ a[x][4];
        }
        for x in 0..5 {
            let d = col[(x + 4) % 5] ^ col[(x + 1) % 5].rotate_left(1);
            for y in 0..5 {
                a[x][y] ^= d;
            }
        }
        let mut b = [[0u64; 5]; 5];
        for x in 0..5 {
            for y in 0..5 {
                b[y][(2 * x + 3 * y) % 5] = a[x][y].rotate_left(rot[x][y]);
            }
        }
        for x in 0..5 {
            for y in 0..5 {
                a[x][y] = b[x][y] ^ (!b[(x + 1) % 5][y] & b[(x + 2) % 5][y]);
            }
        }
        a[0][0] ^= c;
    }
}

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    const RATE: usize = 136;
    let mut msg = data.to_vec();
    msg.push(0x01);
    while msg.len() % RATE != 0 {
        msg.push(0);
    }
    *msg.last_mut().unwrap() |= 0x80;
    let mut a = [[0u64; 5]; 5];
    for block in msg.chunks(RATE) {
        for (i, lane) in block.chunks(8).enumerate() {
            let mut v = 0u64;
            for (k, byte) in lane.iter().enumerate() {
                v |= (*byte as u64) << (8 * k);
            }
            a[i % 5][i / 5] ^= v;
        }
        permute(&mut a);
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        let lane = i / 8;
        *b = (a[lane % 5][lane / 5] >> (8 * (i % 8))) as u8;
    }
    out
}
