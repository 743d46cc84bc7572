// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vedit/codec.hpp"
#include "vedit/image.hpp"

using namespace vedit;
using vedit::testing::error_of;
using vedit::testing::TempDir;

TEST_CASE("sha256 matches the FIPS 180-2 test vectors") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("base64 matches RFC 4648 vectors") {
    auto enc = [](std::string_view s) {
        return base64_encode({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foob") == "Zm9vYg==");
    CHECK(enc("fooba") == "Zm9vYmE=");
    CHECK(enc("foobar") == "Zm9vYmFy");
}

TEST_CASE("atomic write then read returns the same bytes") {
    TempDir dir("codec");
    const std::string bytes("a\0b\nc", 5);
    write_file_atomic(dir / "x.bin", bytes);
    CHECK(read_file(dir / "x.bin") == bytes);
    CHECK(sha256_file_hex(dir / "x.bin") == sha256_hex(bytes));
    CHECK(error_of([&] { (void)read_file(dir / "missing"); }) == Errc::IoError);
}

TEST_CASE("PNG round trip is exact on 8-bit levels") {
    for (const int c : {1, 3}) {
        Image img(13, 7, c);
        std::size_t i = 0;
        for (auto& x : img.data()) x = static_cast<float>((i++ * 37) % 256) / 255.0f;
        const auto back = decode_image(encode_png(img));
        REQUIRE(back.same_shape(img));
        for (std::size_t k = 0; k < img.data().size(); ++k) CHECK(back.data()[k] == img.data()[k]);
    }
}

TEST_CASE("decode rejects garbage") {
    const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK(error_of([&] { (void)decode_image(junk); }) == Errc::ImageDecodeError);
}

TEST_CASE("to_gray uses Rec. 601 weights") {
    Image img(1, 1, 3);
    img.at(0, 0, 0) = 1.0f;
    img.at(1, 0, 0) = 0.5f;
    img.at(2, 0, 0) = 0.0f;
    CHECK(img.to_gray().at(0, 0, 0) == doctest::Approx(0.299 + 0.587 * 0.5).epsilon(1e-6));
}

TEST_CASE("psnr of a constant offset") {
    Image a(8, 8, 1, 0.5f);
    Image b(8, 8, 1, 0.6f);
    // MSE 0.01 -> 20 dB
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));
}
