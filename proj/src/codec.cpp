// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/codec.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "vedit/error.hpp"

namespace vedit {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::BadMagic: return "BadMagic";
        case Errc::TruncatedFile: return "TruncatedFile";
        case Errc::NonFiniteValue: return "NonFiniteValue";
        case Errc::SequenceTooShort: return "SequenceTooShort";
        case Errc::ImageEncodeError: return "ImageEncodeError";
        case Errc::ImageDecodeError: return "ImageDecodeError";
        case Errc::EmptyResponse: return "EmptyResponse";
        case Errc::ProviderError: return "ProviderError";
        case Errc::IoError: return "IoError";
        case Errc::CapacityExceeded: return "CapacityExceeded";
        case Errc::HashMismatch: return "HashMismatch";
        case Errc::CorruptRecord: return "CorruptRecord";
        case Errc::TimestepOutOfRange: return "TimestepOutOfRange";
        case Errc::TimestepOrder: return "TimestepOrder";
        case Errc::OddWidth: return "OddWidth";
        case Errc::ZeroVector: return "ZeroVector";
        case Errc::DimMismatch: return "DimMismatch";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::ConfigError: return "ConfigError";
        case Errc::StageFailure: return "StageFailure";
    }
    return "Unknown";
}

namespace {

struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

std::string to_hex(const unsigned char* data, unsigned int len) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(len) * 2, '0');
    for (unsigned int i = 0; i < len; ++i) {
        out[2 * i] = kDigits[data[i] >> 4];
        out[2 * i + 1] = kDigits[data[i] & 0xF];
    }
    return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw Error(Errc::IoError, "sha256 failed");
    }
    return to_hex(digest.data(), len);
}

std::string sha256_file_hex(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(Errc::IoError, "short write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(Errc::IoError, "rename " + tmp.string() + ": " + ec.message());
}

}  // namespace vedit
