fn main() {
    println!("lunagrasp");
}
