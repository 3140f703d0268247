//! Sign quantization, bit packing and Hamming distance on a few embeddings.

use hashscreen::codes::{cosine_similarity, hamming_distance, sign_quantize};

fn main() -> hashscreen::Result<()> {
    let a = [0.9, -0.2, 0.0, 0.4, -1.3, 0.05, -0.7, 0.2];
    let b = [0.8, -0.1, 0.3, 0.5, -0.9, -0.05, -0.6, 0.1];
    let c = [-0.9, 0.2, -0.1, -0.4, 1.3, -0.05, 0.7, -0.2];

    let (ca, cb, cc) = (sign_quantize(&a)?, sign_quantize(&b)?, sign_quantize(&c)?);
    // zero maps to the negative bit
    println!("a  {}", ca.to_bit_string());
    println!("b  {}", cb.to_bit_string());
    println!("c  {}", cc.to_bit_string());

    println!("hamming(a, b) = {}  cosine(a, b) = {:+.3}", hamming_distance(&ca, &cb)?, cosine_similarity(&a, &b)?);
    println!("hamming(a, c) = {}  cosine(a, c) = {:+.3}", hamming_distance(&ca, &cc)?, cosine_similarity(&a, &c)?);

    // for ±1 vectors the two measures agree: cos = 1 - 2h/d
    let (sa, sc) = (ca.to_f64(), cc.to_f64());
    let h = hamming_distance(&ca, &cc)? as f64;
    println!("cos(sign a, sign c) = {:+.3} = 1 - 2*{h}/8", cosine_similarity(&sa, &sc)?);
    println!("packed words of a: {:#018x}", ca.words()[0]);
    Ok(())
}
