"""Human-to-robot point-policy toolkit."""
