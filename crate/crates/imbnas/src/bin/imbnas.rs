fn main() {
    println!("imbnas");
}
