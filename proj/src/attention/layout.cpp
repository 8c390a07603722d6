// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "proxyv/attention/layout.hpp"

#include <algorithm>

#include "proxyv/errors.hpp"

namespace proxyv {

std::string role_name(TokenRole role) {
    switch (role) {
        case TokenRole::Text: return "text";
        case TokenRole::Vision: return "vision";
        case TokenRole::Separator: return "separator";
        case TokenRole::Proxy: return "proxy";
    }
    return "?";
}

TokenLayout::TokenLayout(std::vector<TokenInfo> tokens) : tokens_(std::move(tokens)) {
    int max_grid = -1;
    for (const auto& t : tokens_) max_grid = std::max(max_grid, t.grid);
    grid_count_ = static_cast<std::size_t>(max_grid + 1);
}

TokenLayout TokenLayout::grids_then_text(std::size_t grids, std::size_t side, std::size_t text) {
    std::vector<TokenInfo> tokens;
    tokens.reserve(grids * (side * side + 1) + text);
    int pos = 0;
    for (std::size_t g = 0; g < grids; ++g) {
        for (std::size_t r = 0; r < side; ++r) {
            for (std::size_t c = 0; c < side; ++c) {
                tokens.push_back({TokenRole::Vision, static_cast<int>(g), static_cast<int>(r), static_cast<int>(c),
                                  pos++});
            }
        }
        tokens.push_back({TokenRole::Separator, static_cast<int>(g), -1, -1, pos++});
    }
    for (std::size_t i = 0; i < text; ++i) tokens.push_back({TokenRole::Text, -1, -1, -1, pos++});
    TokenLayout layout(std::move(tokens));
    layout.grid_count_ = grids;
    return layout;
}

std::vector<int> TokenLayout::positions_with(TokenRole role) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        if (tokens_[i].role == role) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> TokenLayout::text_like_positions() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        if (is_text_like(i)) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> TokenLayout::vision_positions_of_grid(int grid) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        if (tokens_[i].role == TokenRole::Vision && tokens_[i].grid == grid) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> TokenLayout::rope_positions() const {
    std::vector<int> out;
    out.reserve(tokens_.size());
    for (const auto& t : tokens_) out.push_back(t.position);
    return out;
}

void TokenLayout::validate() const {
    std::size_t i = 0;
    int expected_grid = 0;
    const auto fail = [](std::size_t at, const std::string& why) {
        throw InputError("token layout invalid at position " + std::to_string(at) + ": " + why);
    };
    while (i < tokens_.size() && tokens_[i].role != TokenRole::Text) {
        const int g = tokens_[i].grid;
        if (g != expected_grid) fail(i, "grids must appear in order starting at 0");
        if (tokens_[i].role != TokenRole::Vision) fail(i, "grid must start with vision tokens");
        int prev_row = -1, prev_col = -1;
        while (i < tokens_.size() && tokens_[i].role == TokenRole::Vision) {
            const auto& t = tokens_[i];
            if (t.grid != g) fail(i, "vision token of another grid before separator");
            if (t.row < prev_row || (t.row == prev_row && t.col <= prev_col)) fail(i, "vision tokens not in raster order");
            prev_row = t.row;
            prev_col = t.col;
            ++i;
        }
        while (i < tokens_.size() && tokens_[i].role == TokenRole::Proxy) {
            if (tokens_[i].grid != g) fail(i, "proxy token outside its grid block");
            ++i;
        }
        if (i >= tokens_.size() || tokens_[i].role != TokenRole::Separator || tokens_[i].grid != g) {
            fail(i, "each grid block must be followed by exactly one separator");
        }
        ++i;
        ++expected_grid;
    }
    for (; i < tokens_.size(); ++i) {
        if (tokens_[i].role != TokenRole::Text) fail(i, "only text may follow the last grid");
    }
}

}  // namespace proxyv
