// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace proxyv {

enum class TokenRole { Text, Vision, Separator, Proxy };

std::string role_name(TokenRole role);

struct TokenInfo {
    TokenRole role = TokenRole::Text;
    /// Grid the token belongs to (Vision, Proxy, and the grid's Separator); -1 otherwise.
    int grid = -1;
    /// In-grid coordinates; Vision and spatial Proxy tokens only.
    int row = -1;
    int col = -1;
    /// Rotary position id.
    int position = 0;
};

/// Role and placement of every position in a decoder sequence. The vector
/// index is the causal ordering index.
///
/// Image grids come first, each flattened in raster order and followed by one
/// Separator; text follows the last grid. In extended layouts built for proxy
/// layers, a grid's Proxy tokens sit between its vision block and its Separator.
class TokenLayout {
  public:
    TokenLayout() = default;
    explicit TokenLayout(std::vector<TokenInfo> tokens);

    /// `grids` square grids of side `side` followed by `text` text tokens.
    static TokenLayout grids_then_text(std::size_t grids, std::size_t side, std::size_t text);

    std::size_t size() const { return tokens_.size(); }
    const TokenInfo& operator[](std::size_t i) const { return tokens_[i]; }
    const std::vector<TokenInfo>& tokens() const { return tokens_; }

    TokenRole role(std::size_t i) const { return tokens_[i].role; }
    bool is_vision(std::size_t i) const { return tokens_[i].role == TokenRole::Vision; }
    /// Text and Separator positions share the text path.
    bool is_text_like(std::size_t i) const {
        return tokens_[i].role == TokenRole::Text || tokens_[i].role == TokenRole::Separator;
    }

    std::size_t grid_count() const { return grid_count_; }
    std::vector<int> positions_with(TokenRole role) const;
    std::vector<int> vision_positions() const { return positions_with(TokenRole::Vision); }
    std::vector<int> proxy_positions() const { return positions_with(TokenRole::Proxy); }
    /// Text and Separator positions in order.
    std::vector<int> text_like_positions() const;
    std::vector<int> vision_positions_of_grid(int grid) const;
    std::vector<int> rope_positions() const;

    /// Checks ordering invariants; throws InputError describing the first violation.
    void validate() const;

  private:
    std::vector<TokenInfo> tokens_;
    std::size_t grid_count_ = 0;
};

}  // namespace proxyv
