"""
Cook-Torrance reflectance for the colocated capture setup.

GGX normal distribution, height-correlated Smith masking-shadowing and
Schlick Fresnel with F0 taken from the specular albedo map. All functions
are channels-last and broadcast over any leading dimensions.
"""

import math

import torch
import torch.nn.functional as F

# Cosines are clamped here before division; backfacing pairs are zeroed separately.
COS_EPS = 1e-6


def dot(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a * b).sum(dim=-1, keepdim=True)


def ggx_distribution(n_dot_h: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """D(h) = a^2 / (pi * ((n.h)^2 (a^2 - 1) + 1)^2)."""
    a2 = alpha * alpha
    denom = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0
    return a2 / (math.pi * denom * denom)


def smith_lambda(cos_theta: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    c2 = cos_theta * cos_theta
    tan2 = (1.0 - c2) / c2
    return 0.5 * (torch.sqrt(1.0 + alpha * alpha * tan2) - 1.0)


def smith_g(n_dot_wi: torch.Tensor, n_dot_wo: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """Height-correlated Smith G2 = 1 / (1 + Lambda(wi) + Lambda(wo))."""
    return 1.0 / (1.0 + smith_lambda(n_dot_wi, alpha) + smith_lambda(n_dot_wo, alpha))


def schlick_fresnel(cos_theta: torch.Tensor, f0: torch.Tensor) -> torch.Tensor:
    return f0 + (1.0 - f0) * (1.0 - cos_theta) ** 5


def eval_brdf(wi: torch.Tensor, wo: torch.Tensor, normal: torch.Tensor,
              diffuse: torch.Tensor, specular: torch.Tensor, roughness: torch.Tensor) -> torch.Tensor:
    """
    Evaluate f = diffuse / pi + D F G / (4 (n.wi)(n.wo)).

    Args:
        wi, wo, normal: (..., 3) unit vectors.
        diffuse: (..., 3) linear albedo.
        specular: (..., 1) specular albedo, used as Fresnel F0.
        roughness: (..., 1) GGX alpha, never below ALPHA_MIN.

    Returns:
        (..., 3) reflectance. Zero where either cosine is not positive. A zero
        specular albedo switches the microfacet lobe off entirely, so the
        result is exactly diffuse / pi there.
    """
    n_dot_wi = dot(normal, wi)
    n_dot_wo = dot(normal, wo)
    front_facing = (n_dot_wi > 0) & (n_dot_wo > 0)
    cos_i = n_dot_wi.clamp(min=COS_EPS)
    cos_o = n_dot_wo.clamp(min=COS_EPS)

    half = F.normalize(wi + wo, dim=-1, eps=1e-12)
    n_dot_h = dot(normal, half).clamp(0.0, 1.0)
    v_dot_h = dot(wo, half).clamp(0.0, 1.0)

    d_term = ggx_distribution(n_dot_h, roughness)
    g_term = smith_g(cos_i, cos_o, roughness)
    f_term = schlick_fresnel(v_dot_h, specular)
    specular_lobe = d_term * f_term * g_term / (4.0 * cos_i * cos_o)
    specular_lobe = torch.where(specular > 0, specular_lobe, torch.zeros_like(specular_lobe))

    reflectance = diffuse / math.pi + specular_lobe
    return torch.where(front_facing, reflectance, torch.zeros_like(reflectance))
