// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include <json.hpp>

#include "vedit/codec.hpp"
#include "vedit/conditioning.hpp"
#include "vedit/error.hpp"

namespace vedit {

static_assert(std::endian::native == std::endian::little, "latent I/O assumes a little-endian host");

namespace {

constexpr std::size_t kHeaderBytes = 8;

std::uint16_t checked_u16(int v, const char* what) {
    if (v <= 0 || v > std::numeric_limits<std::uint16_t>::max()) {
        throw Error(Errc::InvalidArgument, std::string(what) + " does not fit the 16-bit latent header");
    }
    return static_cast<std::uint16_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_latent(const LatentGrid& z) {
    const std::uint16_t dims[4] = {checked_u16(z.channels(), "channels"), checked_u16(z.height(), "height"),
                                   checked_u16(z.width(), "width"), 0};
    std::vector<std::uint8_t> out(kHeaderBytes + z.size() * sizeof(float));
    std::memcpy(out.data(), dims, kHeaderBytes);
    std::memcpy(out.data() + kHeaderBytes, z.values().data(), z.size() * sizeof(float));
    return out;
}

LatentGrid decode_latent(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes) throw Error(Errc::TruncatedFile, "latent header truncated");
    std::uint16_t dims[4];
    std::memcpy(dims, bytes.data(), kHeaderBytes);
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw Error(Errc::CorruptRecord, "latent header has a zero dimension");
    LatentGrid z(dims[0], dims[1], dims[2]);
    if (bytes.size() != kHeaderBytes + z.size() * sizeof(float)) {
        throw Error(Errc::TruncatedFile, "latent payload size does not match its header");
    }
    std::memcpy(z.values().data(), bytes.data() + kHeaderBytes, z.size() * sizeof(float));
    z.validate();
    return z;
}

void write_latent(const LatentGrid& z, const std::filesystem::path& path) {
    const auto bytes = encode_latent(z);
    const std::string_view raw(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    write_file_atomic(path, raw);
    const nlohmann::json sidecar = {
        {"channels", z.channels()}, {"height", z.height()},     {"width", z.width()},
        {"dtype", "float32"},       {"endian", "little"},       {"header_bytes", kHeaderBytes},
        {"sha256", sha256_hex(raw)},
    };
    auto side = path;
    side += ".json";
    write_file_atomic(side, sidecar.dump(2) + "\n");
}

LatentGrid read_latent(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    return decode_latent({reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()});
}

}  // namespace vedit
