// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vedit {

enum class Errc {
    DimensionMismatch,
    ShapeMismatch,
    BadMagic,
    TruncatedFile,
    NonFiniteValue,
    SequenceTooShort,
    ImageEncodeError,
    ImageDecodeError,
    EmptyResponse,
    ProviderError,
    IoError,
    CapacityExceeded,
    HashMismatch,
    CorruptRecord,
    TimestepOutOfRange,
    TimestepOrder,
    OddWidth,
    ZeroVector,
    DimMismatch,
    InvalidArgument,
    ConfigError,
    StageFailure,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

}  // namespace vedit
