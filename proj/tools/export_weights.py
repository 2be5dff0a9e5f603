#!/usr/bin/env python3
"""Export torchvision/timm weights to safetensors for the iia tools.

Parameter names are kept as-is; the C++ models use the same names.

    export_weights.py resnet101 out/resnet101.safetensors --pretrained
    export_weights.py vit_small_patch16 out.safetensors --seed 3 --fixture fx.safetensors
"""
import argparse
import sys

import torch
from safetensors.torch import save_file

TIMM_NAMES = {
    "vit_base_patch16": "vit_base_patch16_224",
    "vit_small_patch16": "vit_small_patch16_224",
}


def build(model_id, pretrained):
    if model_id in TIMM_NAMES:
        import timm
        return timm.create_model(TIMM_NAMES[model_id], pretrained=pretrained)
    if model_id == "toy_vit":
        from timm.models.vision_transformer import VisionTransformer
        return VisionTransformer(img_size=32, patch_size=8, embed_dim=32, depth=3, num_heads=2, num_classes=10)
    import torchvision
    weights = "DEFAULT" if pretrained else None
    ctor = {"resnet101": torchvision.models.resnet101,
            "densenet201": torchvision.models.densenet201,
            "convnext_base": torchvision.models.convnext_base}.get(model_id)
    if ctor is None:
        sys.exit(f"unknown model {model_id}")
    return ctor(weights=weights)


def input_shape(model_id):
    return (3, 32, 32) if model_id == "toy_vit" else (3, 224, 224)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("model")
    ap.add_argument("out")
    ap.add_argument("--pretrained", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fixture", help="also write a random input batch and its logits here")
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    model = build(args.model, args.pretrained).eval()
    if not args.pretrained:
        # Random init: give batch-norm layers non-trivial statistics so the
        # fixture exercises them.
        for m in model.modules():
            if isinstance(m, torch.nn.BatchNorm2d):
                m.running_mean.uniform_(-0.1, 0.1)
                m.running_var.uniform_(0.5, 1.5)
                m.weight.data.uniform_(0.5, 1.0)
                m.bias.data.uniform_(-0.1, 0.1)
    state = {k: v.contiguous() for k, v in model.state_dict().items()}
    save_file(state, args.out)
    if args.fixture:
        x = torch.randn(2, *input_shape(args.model))
        with torch.no_grad():
            logits = model(x)
        save_file({"input": x, "logits": logits}, args.fixture)


if __name__ == "__main__":
    main()
