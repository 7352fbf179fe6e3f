# Store module for campaign results
