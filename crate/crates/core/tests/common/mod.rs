/// Negacyclic schoolbook product of one residue row, in u128.
pub fn schoolbook(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
    let n = a.len();
    let q = q as u128;
    let mut out = vec![0u128; n];
    for i in 0..n {
        for j in 0..n {
            let p = a[i] as u128 * b[j] as u128 % q;
            let k = i + j;
            if k < n {
                out[k] = (out[k] + p) % q;
            } else {
                out[k - n] = (out[k - n] + q - p) % q;
            }
        }
    }
    out.into_iter().map(|v| v as u64).collect()
}
