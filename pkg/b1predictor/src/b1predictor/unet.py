"""3-level 3D U-Net: 3x3x3 convs + ReLU + max-pooling down, 2x2x2
transposed convs up, skip connections, channel widths 16/32/64."""

from __future__ import annotations

import torch
import torch.nn as nn


class ConvBlock(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv1 = nn.Conv3d(cin, cout, 3, stride=1, padding=1)
        self.conv2 = nn.Conv3d(cout, cout, 3, stride=1, padding=1)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.relu(self.conv2(self.relu(self.conv1(x))))


class UNet3D(nn.Module):
    def __init__(self, widths=(16, 32, 64)):
        super().__init__()
        w1, w2, w3 = widths
        self.down1 = ConvBlock(1, w1)
        self.down2 = ConvBlock(w1, w2)
        self.down3 = ConvBlock(w2, w3)
        self.pool = nn.MaxPool3d(2)
        self.up2 = nn.ConvTranspose3d(w3, w2, 2, stride=2)
        self.dec2 = ConvBlock(w2 + w2, w2)
        self.up1 = nn.ConvTranspose3d(w2, w1, 2, stride=2)
        self.dec1 = ConvBlock(w1 + w1, w1)
        self.head = nn.Conv3d(w1, 1, 1)

    def forward(self, x):
        x1 = self.down1(x)
        x2 = self.down2(self.pool(x1))
        x3 = self.down3(self.pool(x2))
        y2 = self.dec2(torch.cat([self.up2(x3), x2], dim=1))
        y1 = self.dec1(torch.cat([self.up1(y2), x1], dim=1))
        return self.head(y1)
