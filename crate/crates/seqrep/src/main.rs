fn main() {
    println!("seqrep");
}
