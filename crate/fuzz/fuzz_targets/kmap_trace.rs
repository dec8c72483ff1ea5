#![no_main]

libfuzzer_sys::fuzz_target!(|data: &[u8]| avnmp_fuzz::kmap_trace(data));
