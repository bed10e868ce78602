fn main() {
    println!("belt");
}
