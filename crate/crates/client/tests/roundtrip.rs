use snoopy_client::{ClientError, SnoopyClient};
use snoopy_core::api::{ErrorCategory, ProfileRequest, StabilityRequest};
use snoopy_core::eval::StabilityFeature;
use snoopy_core::profiler::ProfileVariant;
use snoopy_core::sim::{BrowsingContext, EncoderParams};
use snoopy_core::site::SiteSpec;

async fn client() -> SnoopyClient {
    let (addr, _task) = snoopy_server::spawn_local().await.unwrap();
    SnoopyClient::new(&format!("http://{addr}")).unwrap()
}

#[tokio::test]
async fn health_and_generate() {
    let c = client().await;
    assert_eq!(c.health().await.unwrap().status, "ok");
    let site = c.generate_site(&SiteSpec::new(8, 11)).await.unwrap();
    assert_eq!(site.page_count(), 8);
}

#[tokio::test]
async fn budget_error_keeps_category() {
    let c = client().await;
    let website = c.generate_site(&SiteSpec::new(10, 2)).await.unwrap();
    let err = c
        .profile(&ProfileRequest {
            website,
            context: BrowsingContext::new("os_a", "browser_a"),
            samples_per_page: 2,
            variants: ProfileVariant::standard(),
            budget: 39,
            params: EncoderParams::default(),
            seed: 1,
        })
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Api(_)));
    assert_eq!(err.category(), ErrorCategory::Budget);
}

#[tokio::test]
async fn stability_of_sizes_is_flat() {
    let c = client().await;
    let website = c.generate_site(&SiteSpec::new(10, 4)).await.unwrap();
    let ctx = BrowsingContext::new("os_a", "browser_a");
    let table = c
        .stability(&StabilityRequest {
            website,
            contexts: vec![ctx.clone(), ctx],
            feature: StabilityFeature::ResourceSize,
            params: EncoderParams::default(),
            seed: 9,
        })
        .await
        .unwrap();
    assert_eq!(table.max_cv, 0.0);
}

#[tokio::test]
async fn unknown_os_is_invalid_input() {
    let c = client().await;
    let website = c.generate_site(&SiteSpec::new(4, 2)).await.unwrap();
    let err = c
        .profile(&ProfileRequest {
            website,
            context: BrowsingContext::new("os_zzz", "browser_a"),
            samples_per_page: 1,
            variants: vec![ProfileVariant::PLAIN],
            budget: 100,
            params: EncoderParams::default(),
            seed: 1,
        })
        .await
        .unwrap_err();
    assert_eq!(err.category(), ErrorCategory::InvalidInput);
}
