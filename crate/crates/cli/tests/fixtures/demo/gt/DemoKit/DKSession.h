#import <Foundation/Foundation.h>

NS_ASSUME_NONNULL_BEGIN

@interface DKSession : NSObject
@property (nonatomic, readonly) NSString *identifier;
- (NSString *)displayName;
- (void)loadItems:(NSArray<NSString *> *)items completion:(void (^)(NSError *))handler;
- (BOOL)isActive;
- (void)setOrigin:(CGPoint)origin;
- (NSDictionary<NSString *, NSNumber *> *)statistics;
- (id<NSCopying>)snapshotKey;
+ (DKSession *)sharedSession;
- (NSUInteger)countOfItems;
@end

NS_ASSUME_NONNULL_END
