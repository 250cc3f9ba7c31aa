from hypothesis import HealthCheck, settings

# keep repeated suite runs byte-stable
settings.register_profile(
    "repo",
    derandomize=True,
    max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")
